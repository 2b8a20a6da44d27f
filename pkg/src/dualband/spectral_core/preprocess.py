"""Radiometric calibration and chemometric preprocessing."""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.signal import savgol_filter

from ..errors import DomainError, NumericError, ParameterError, ShapeError
from .types import CubeKind, Hypercube, Spectrum, WavelengthAxis

EPS = 1e-6
REFLECTANCE_CLAMP = (-0.1, 2.0)
SAVGOL_WINDOW = 11
SAVGOL_ORDER = 2


def calibrate(raw: Hypercube, white: Hypercube, dark: Hypercube) -> Hypercube:
    """Convert raw intensities to reflectance with white/dark references.

    Voxels whose white-dark difference is below ``EPS`` in magnitude are
    set to 0, and the result is clamped to ``REFLECTANCE_CLAMP`` so dead or
    saturated pixels cannot produce huge values downstream.
    """
    if raw.kind is not CubeKind.RAW:
        raise DomainError(f"calibrate expects a {CubeKind.RAW.value} cube, got {raw.kind.value}")
    for name, ref in (("white", white), ("dark", dark)):
        if ref.shape != raw.shape:
            raise ShapeError(f"{name} reference shape {ref.shape} != raw shape {raw.shape}")
        if ref.axis != raw.axis:
            raise ShapeError(f"{name} reference wavelength axis differs from raw")

    i_raw = raw.data.astype(np.float64)
    i_d = dark.data.astype(np.float64)
    denom = white.data.astype(np.float64) - i_d
    if np.any(denom < -EPS):
        raise DomainError("white reference is below dark reference for some voxels")
    valid = np.abs(denom) >= EPS
    refl = np.zeros_like(i_raw)
    np.divide(i_raw - i_d, denom, out=refl, where=valid)
    np.clip(refl, *REFLECTANCE_CLAMP, out=refl)
    return Hypercube(refl, raw.axis, CubeKind.REFLECTANCE)


def msc(values: np.ndarray, reference: np.ndarray | None = None) -> np.ndarray:
    """Multiplicative scatter correction on an (n, B) array.

    Each row ``x`` is regressed on ``reference`` (``x ~ a*ref + b``) and
    replaced by ``(x - b) / a``. The reference defaults to the batch mean.
    """
    x = np.atleast_2d(np.asarray(values, dtype=np.float64))
    ref = x.mean(axis=0) if reference is None else np.asarray(reference, dtype=np.float64).ravel()
    if ref.size != x.shape[1]:
        raise ShapeError(f"reference has {ref.size} bands, spectra have {x.shape[1]}")
    ref_c = ref - ref.mean()
    ss = float(ref_c @ ref_c)
    if ss <= EPS * EPS * ref.size:
        raise NumericError("MSC reference spectrum is constant; regression is degenerate")
    x_mean = x.mean(axis=1)
    slope = (x - x_mean[:, None]) @ ref_c / ss
    intercept = x_mean - slope * ref.mean()
    if np.any(np.abs(slope) < EPS):
        bad = np.flatnonzero(np.abs(slope) < EPS)
        raise NumericError(f"MSC slope ~0 for spectra {bad.tolist()}")
    return (x - intercept[:, None]) / slope[:, None]


def msc_correct(spectra: Sequence[Spectrum], reference: Spectrum | None = None) -> list[Spectrum]:
    if not spectra:
        return []
    axis = spectra[0].axis
    for s in spectra[1:]:
        if s.axis != axis:
            raise ShapeError("all spectra must share one wavelength axis")
    if reference is not None and reference.axis != axis:
        raise ShapeError("reference spectrum axis differs from input spectra")
    stacked = np.vstack([s.values for s in spectra])
    out = msc(stacked, None if reference is None else reference.values)
    return [Spectrum(row, axis) for row in out]


def _check_savgol(n: int, window: int, order: int) -> None:
    if window < 1 or window % 2 == 0:
        raise ParameterError(f"Savitzky-Golay window must be a positive odd count, got {window}")
    if order < 0 or order >= window:
        raise ParameterError(f"polynomial order must satisfy 0 <= order < window, got {order}")
    if window > n:
        raise ParameterError(f"window {window} exceeds spectrum length {n}")


def savgol(values: np.ndarray, window: int = SAVGOL_WINDOW, order: int = SAVGOL_ORDER) -> np.ndarray:
    """Savitzky-Golay smoothing along the last axis with mirror-padded edges."""
    v = np.asarray(values, dtype=np.float64)
    _check_savgol(v.shape[-1], window, order)
    return savgol_filter(v, window, order, mode="mirror", axis=-1)


def savgol_smooth(s: Spectrum, window: int = SAVGOL_WINDOW, order: int = SAVGOL_ORDER) -> Spectrum:
    return Spectrum(savgol(s.values, window, order), s.axis)


def preprocess_values(
    values: np.ndarray,
    *,
    use_msc: bool = True,
    msc_reference: np.ndarray | None = None,
    use_savgol: bool = True,
    window: int = SAVGOL_WINDOW,
    order: int = SAVGOL_ORDER,
) -> np.ndarray:
    """MSC then Savitzky-Golay, the order used when building instance spectra."""
    out = np.atleast_2d(np.asarray(values, dtype=np.float64))
    if use_msc:
        out = msc(out, msc_reference)
    if use_savgol:
        out = savgol(out, window, order)
    return out


def check_axis_compatible(a: WavelengthAxis, b: WavelengthAxis) -> None:
    if a != b:
        raise ShapeError("wavelength axes differ")
