"""Statistical subband features, feature masks and dual-band assembly.

Nine features are computed per subband window, always in this order::

    max, min, argmax, argmin, mean, median, area, skewness, kurtosis

argmax/argmin and the integration variable for ``area`` are in micrometres
so the positional features stay inside [0, 1] for VNIR data. A
``FeatureMask`` selects a subset of the nine; bit ``i`` of the mask is
feature ``i`` above, so mask 1 is ``{max}`` and mask 511 is everything.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, LoadError, ParameterError, ShapeError
from .spectral_core.types import Spectrum, WavelengthAxis

FEATURE_NAMES = ("max", "min", "argmax", "argmin", "mean", "median", "area", "skewness", "kurtosis")
N_FEATURES = len(FEATURE_NAMES)
FULL_MASK = (1 << N_FEATURES) - 1
MIN_SAMPLES = 3
DEFAULT_OVERLAP_TOLERANCE_NM = 20.0


@dataclass(frozen=True, order=True)
class SubbandWindow:
    lo_nm: float
    hi_nm: float

    def __post_init__(self):
        if not self.lo_nm < self.hi_nm:
            raise ParameterError(f"window needs lo < hi, got {self.lo_nm:g}-{self.hi_nm:g}")

    @property
    def width_nm(self) -> float:
        return self.hi_nm - self.lo_nm

    def overlap_nm(self, other: "SubbandWindow") -> float:
        return max(0.0, min(self.hi_nm, other.hi_nm) - max(self.lo_nm, other.lo_nm))

    def __str__(self) -> str:
        return f"{self.lo_nm:g}-{self.hi_nm:g}"

    @classmethod
    def parse(cls, text: str) -> "SubbandWindow":
        try:
            lo, hi = text.strip().split("-")
            return cls(float(lo), float(hi))
        except ValueError as exc:
            raise ParameterError(f"cannot parse window {text!r}; expected 'lo-hi'") from exc


@dataclass(frozen=True, order=True)
class FeatureMask:
    bits: int

    def __post_init__(self):
        if not 0 <= self.bits <= FULL_MASK:
            raise ParameterError(f"mask bits must be in [0, {FULL_MASK}], got {self.bits}")

    @classmethod
    def from_names(cls, names: Iterable[str]) -> "FeatureMask":
        bits = 0
        for name in names:
            name = name.strip().lower()
            if name not in FEATURE_NAMES:
                raise ParameterError(f"unknown feature {name!r}; expected one of {FEATURE_NAMES}")
            bits |= 1 << FEATURE_NAMES.index(name)
        return cls(bits)

    @classmethod
    def from_bools(cls, flags: Sequence[bool]) -> "FeatureMask":
        if len(flags) != N_FEATURES:
            raise ParameterError(f"need {N_FEATURES} flags, got {len(flags)}")
        return cls(sum(1 << i for i, f in enumerate(flags) if f))

    @classmethod
    def parse(cls, text: str) -> "FeatureMask":
        return cls.from_names(t for t in text.split("+") if t.strip())

    def as_bools(self) -> tuple[bool, ...]:
        return tuple(bool(self.bits >> i & 1) for i in range(N_FEATURES))

    @property
    def indices(self) -> tuple[int, ...]:
        return tuple(i for i in range(N_FEATURES) if self.bits >> i & 1)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(FEATURE_NAMES[i] for i in self.indices)

    @property
    def popcount(self) -> int:
        return bin(self.bits).count("1")

    def complement(self) -> "FeatureMask":
        return FeatureMask(FULL_MASK ^ self.bits)

    def __str__(self) -> str:
        return "+".join(self.names)


@dataclass(frozen=True)
class FeatureVector:
    max: float
    min: float
    argmax_um: float
    argmin_um: float
    mean: float
    median: float
    area: float
    skewness: float
    kurtosis: float

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.max, self.min, self.argmax_um, self.argmin_um, self.mean,
             self.median, self.area, self.skewness, self.kurtosis],
            dtype=np.float64,
        )

    @classmethod
    def from_array(cls, arr) -> "FeatureVector":
        return cls(*(float(v) for v in arr))


@dataclass(frozen=True)
class DualBandFeatureSet:
    """Windows and their masks whose features are concatenated in order."""

    windows: tuple[SubbandWindow, ...]
    masks: tuple[FeatureMask, ...]
    metadata: dict = field(default_factory=dict, compare=False)
    overlap_tolerance_nm: float = field(default=DEFAULT_OVERLAP_TOLERANCE_NM, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "windows", tuple(self.windows))
        object.__setattr__(self, "masks", tuple(self.masks))
        if len(self.windows) != len(self.masks):
            raise ParameterError("windows and masks must have the same length")
        if not self.windows:
            raise ParameterError("feature set needs at least one window")
        if any(m.bits == 0 for m in self.masks):
            raise ParameterError("feature set contains a zero mask")
        for i, a in enumerate(self.windows):
            for b in self.windows[i + 1:]:
                if a.overlap_nm(b) > self.overlap_tolerance_nm + 1e-9:
                    raise ParameterError(
                        f"windows {a} and {b} overlap by {a.overlap_nm(b):g} nm "
                        f"(> {self.overlap_tolerance_nm:g})"
                    )

    @property
    def feature_dim(self) -> int:
        return sum(m.popcount for m in self.masks)

    def column_names(self) -> list[str]:
        return [f"{name}@{w}" for w, m in zip(self.windows, self.masks) for name in m.names]

    def to_dict(self) -> dict:
        return {
            "format": "dualband-featureset",
            "version": 1,
            "windows": [[w.lo_nm, w.hi_nm] for w in self.windows],
            "masks": [list(m.names) for m in self.masks],
            "feature_dim": self.feature_dim,
            "overlap_tolerance_nm": self.overlap_tolerance_nm,
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "DualBandFeatureSet":
        try:
            windows = tuple(SubbandWindow(float(lo), float(hi)) for lo, hi in doc["windows"])
            masks = tuple(FeatureMask.from_names(names) for names in doc["masks"])
        except (KeyError, TypeError, ValueError) as exc:
            raise LoadError(f"malformed feature set document: {exc}") from exc
        return cls(
            windows,
            masks,
            dict(doc.get("metadata", {})),
            float(doc.get("overlap_tolerance_nm", DEFAULT_OVERLAP_TOLERANCE_NM)),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "DualBandFeatureSet":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise LoadError(f"{path}: {exc}") from exc
        return cls.from_dict(doc)

    def __str__(self) -> str:
        return " | ".join(f"{{{m}}}@{w}" for w, m in zip(self.windows, self.masks))


def window_slice(axis: WavelengthAxis, w: SubbandWindow) -> slice:
    """Index slice of the bands inside ``w`` (inclusive on both ends)."""
    wl = axis.wavelengths_nm
    step = float(np.median(np.diff(wl))) if wl.size > 1 else 0.0
    tol = 0.5 * step + 1e-9
    if w.lo_nm < axis.lo - tol or w.hi_nm > axis.hi + tol:
        raise ParameterError(
            f"window {w} lies outside the axis range {axis.lo:g}-{axis.hi:g} nm"
        )
    start, stop = axis.index_range(w.lo_nm, w.hi_nm)
    if stop <= start:
        raise ParameterError(f"window {w} selects no bands")
    return slice(start, stop)


def slice_window(s: Spectrum, w: SubbandWindow) -> Spectrum:
    sl = window_slice(s.axis, w)
    return Spectrum(s.values[sl], WavelengthAxis(s.axis.wavelengths_nm[sl]))


def window_features(values: np.ndarray, wavelengths_nm: np.ndarray, which: Sequence[int] | None = None) -> np.ndarray:
    """Feature matrix for an (n, b) block of already-sliced spectra.

    ``which`` restricts computation to those feature indices (in the
    given order); by default all nine are returned.
    """
    raw = np.atleast_2d(np.asarray(values))
    if raw.dtype.kind != "f":
        raw = raw.astype(np.float64)
    if raw.shape[1] < MIN_SAMPLES:
        raise DomainError(f"features need at least {MIN_SAMPLES} samples, got {raw.shape[1]}")
    wl_um = np.asarray(wavelengths_nm, dtype=np.float64) / 1000.0
    if wl_um.size != raw.shape[1]:
        raise ShapeError("wavelengths and spectra disagree in length")
    which = tuple(range(N_FEATURES)) if which is None else tuple(which)
    out = np.empty((raw.shape[0], len(which)), dtype=np.float64)
    cache: dict[str, np.ndarray] = {}
    # max/min/argmax/argmin run on the input dtype: widening float32 to
    # float64 is exact and order preserving, so results are identical and
    # pixel-scale inputs skip a full float64 copy
    x = raw if raw.dtype == np.float64 or not set(which) - {0, 1, 2, 3} else raw.astype(np.float64)

    def moments():
        if "m2" not in cache:
            mean = mean_()
            d = x - mean[:, None]
            d2 = d * d
            m2 = d2.mean(axis=1)
            cache["m2"] = m2
            cache["m3"] = (d2 * d).mean(axis=1)
            cache["m4"] = (d2 * d2).mean(axis=1)
            scale = np.abs(x).max(axis=1)
            cache["flat"] = (m2 == 0.0) | (m2 <= (1e-10 * scale) ** 2)
        return cache["m2"], cache["m3"], cache["m4"], cache["flat"]

    def arg(fn):
        if fn.__name__ not in cache:
            cache[fn.__name__] = fn(raw, axis=1)
        return cache[fn.__name__]

    def extreme(fn):
        # the value at the first arg-extremum equals the max/min exactly
        return np.take_along_axis(raw, arg(fn)[:, None], axis=1)[:, 0]

    def mean_():
        if "mean" not in cache:
            cache["mean"] = x.mean(axis=1)
        return cache["mean"]

    for col, f in enumerate(which):
        if f == 0:
            out[:, col] = extreme(np.argmax) if 2 in which else raw.max(axis=1)
        elif f == 1:
            out[:, col] = extreme(np.argmin) if 3 in which else raw.min(axis=1)
        elif f == 2:
            out[:, col] = wl_um[arg(np.argmax)]
        elif f == 3:
            out[:, col] = wl_um[arg(np.argmin)]
        elif f == 4:
            out[:, col] = mean_()
        elif f == 5:
            out[:, col] = np.median(x, axis=1)
        elif f == 6:
            out[:, col] = ((x[:, 1:] + x[:, :-1]) * (0.5 * np.diff(wl_um))).sum(axis=1)
        elif f == 7:
            m2, m3, _, flat = moments()
            with np.errstate(divide="ignore", invalid="ignore"):
                out[:, col] = np.where(flat, 0.0, m3 / np.where(flat, 1.0, m2) ** 1.5)
        elif f == 8:
            m2, _, m4, flat = moments()
            with np.errstate(divide="ignore", invalid="ignore"):
                out[:, col] = np.where(flat, 3.0, m4 / np.where(flat, 1.0, m2) ** 2)
        else:
            raise ParameterError(f"feature index {f} out of range")
    return out


def compute_features(s: Spectrum) -> FeatureVector:
    return FeatureVector.from_array(window_features(s.values[None, :], s.wavelengths_nm)[0])


def apply_mask(fv: FeatureVector | np.ndarray, m: FeatureMask) -> np.ndarray:
    if m.bits == 0:
        raise ParameterError("the zero mask selects no features")
    arr = fv.as_array() if isinstance(fv, FeatureVector) else np.asarray(fv, dtype=np.float64)
    return arr[..., list(m.indices)]


def assemble_matrix(values: np.ndarray, axis: WavelengthAxis, fset: DualBandFeatureSet) -> np.ndarray:
    """Row-wise ``assemble_dual`` for an (n, B) block of spectra on ``axis``."""
    x = np.atleast_2d(values)
    if x.shape[1] != len(axis):
        raise ShapeError(f"spectra have {x.shape[1]} bands, axis has {len(axis)}")
    blocks = []
    for w, m in zip(fset.windows, fset.masks):
        sl = window_slice(axis, w)
        blocks.append(window_features(x[:, sl], axis.wavelengths_nm[sl], m.indices))
    return np.concatenate(blocks, axis=1)


def assemble_dual(s: Spectrum, fset: DualBandFeatureSet) -> np.ndarray:
    return assemble_matrix(s.values[None, :], s.axis, fset)[0]


def write_feature_csv(path, X: np.ndarray, fset: DualBandFeatureSet, labels: Sequence[str] | None = None) -> None:
    X = np.atleast_2d(X)
    if X.shape[1] != fset.feature_dim:
        raise ShapeError(f"matrix has {X.shape[1]} columns, feature set has {fset.feature_dim}")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        head = fset.column_names()
        writer.writerow((["label"] if labels is not None else []) + head)
        for i, row in enumerate(X):
            prefix = [labels[i]] if labels is not None else []
            writer.writerow(prefix + [repr(float(v)) for v in row])
