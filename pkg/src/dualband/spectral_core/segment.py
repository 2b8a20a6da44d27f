"""NDVI background removal and per-instance mean spectra.

A pixel mask is a plain ``(H, W)`` boolean array, ``True`` on fruit.
"""

from __future__ import annotations

import numpy as np

from ..errors import DomainError, ShapeError
from .preprocess import EPS
from .types import Hypercube, Spectrum

OTSU_BINS = 64
DEFAULT_RED_NM = 670.0
DEFAULT_NIR_NM = 800.0


def ndvi(cube: Hypercube, red_nm: float = DEFAULT_RED_NM, nir_nm: float = DEFAULT_NIR_NM) -> np.ndarray:
    red = cube.band(red_nm).astype(np.float64)
    nir = cube.band(nir_nm).astype(np.float64)
    return (nir - red) / (nir + red + EPS)


def otsu_threshold(values: np.ndarray, bins: int = OTSU_BINS) -> float | None:
    """Otsu threshold on a ``bins``-bin histogram.

    Returns the upper edge of the last bin assigned to the lower class, or
    ``None`` when the values span no range (nothing to split).
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    v = v[np.isfinite(v)]
    if v.size == 0:
        return None
    lo, hi = float(v.min()), float(v.max())
    if hi - lo <= 1e-12 * max(1.0, abs(lo), abs(hi)):
        return None
    counts, edges = np.histogram(v, bins=bins, range=(lo, hi))
    p = counts / counts.sum()
    centers = 0.5 * (edges[:-1] + edges[1:])
    w0 = np.cumsum(p)
    mu_cum = np.cumsum(p * centers)
    mu_total = mu_cum[-1]
    w1 = 1.0 - w0
    with np.errstate(divide="ignore", invalid="ignore"):
        between = (mu_total * w0 - mu_cum) ** 2 / (w0 * w1)
    # the last split puts everything in class 0
    between[-1] = -np.inf
    between[~np.isfinite(between)] = -np.inf
    t = int(np.argmax(between))
    return float(edges[t + 1])


def ndvi_segment(
    cube: Hypercube,
    red_nm: float = DEFAULT_RED_NM,
    nir_nm: float = DEFAULT_NIR_NM,
    fruit_low_ndvi: bool = True,
) -> np.ndarray:
    """Foreground mask from an Otsu split of the per-pixel NDVI.

    Vegetation and background leaves score high NDVI, so by default the
    fruit is the low side of the threshold. If the NDVI image is flat the
    histogram cannot be split and the mask is all background.
    """
    cube.axis.nearest_index(red_nm)
    cube.axis.nearest_index(nir_nm)
    index = ndvi(cube, red_nm, nir_nm)
    thr = otsu_threshold(index)
    if thr is None:
        return np.zeros(index.shape, dtype=bool)
    # bins are half-open, so the lower class is strictly below the edge
    return index < thr if fruit_low_ndvi else index >= thr


def instance_mean_spectrum(cube: Hypercube, mask: np.ndarray) -> Spectrum:
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (cube.height, cube.width):
        raise ShapeError(f"mask shape {mask.shape} != cube spatial shape {(cube.height, cube.width)}")
    if not mask.any():
        raise DomainError("mask selects no foreground pixels")
    fg = cube.data[mask].astype(np.float64)
    return Spectrum(fg.mean(axis=0), cube.axis)
