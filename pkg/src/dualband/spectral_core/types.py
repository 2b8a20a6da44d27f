"""Containers for wavelength axes, spectra and hypercubes."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from ..errors import ParameterError, ShapeError

WAVELENGTH_BOUNDS_NM = (100.0, 3000.0)


class CubeKind(str, enum.Enum):
    RAW = "RawIntensity"
    REFLECTANCE = "Reflectance"


@dataclass(frozen=True, eq=False)
class WavelengthAxis:
    """Strictly increasing band-centre wavelengths in nanometres."""

    wavelengths_nm: np.ndarray

    def __post_init__(self):
        wl = np.asarray(self.wavelengths_nm, dtype=np.float64).ravel()
        if wl.size == 0:
            raise ParameterError("wavelength axis is empty")
        if not np.all(np.isfinite(wl)):
            raise ParameterError("wavelength axis contains non-finite values")
        if wl.size > 1 and np.any(np.diff(wl) <= 0):
            raise ParameterError("wavelength axis must be strictly increasing")
        lo, hi = WAVELENGTH_BOUNDS_NM
        if wl[0] < lo or wl[-1] > hi:
            raise ParameterError(
                f"wavelengths must lie within [{lo:g}, {hi:g}] nm, got "
                f"[{wl[0]:g}, {wl[-1]:g}]"
            )
        wl.setflags(write=False)
        object.__setattr__(self, "wavelengths_nm", wl)

    @classmethod
    def linspace(cls, lo_nm: float, hi_nm: float, n: int) -> "WavelengthAxis":
        return cls(np.linspace(lo_nm, hi_nm, n))

    @classmethod
    def regular(cls, lo_nm: float, hi_nm: float, step_nm: float = 1.0) -> "WavelengthAxis":
        n = int(round((hi_nm - lo_nm) / step_nm)) + 1
        return cls(lo_nm + step_nm * np.arange(n))

    def __len__(self) -> int:
        return self.wavelengths_nm.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, WavelengthAxis):
            return NotImplemented
        return np.array_equal(self.wavelengths_nm, other.wavelengths_nm)

    def __hash__(self):
        return hash(self.wavelengths_nm.tobytes())

    @property
    def lo(self) -> float:
        return float(self.wavelengths_nm[0])

    @property
    def hi(self) -> float:
        return float(self.wavelengths_nm[-1])

    def nearest_index(self, nm: float) -> int:
        """Index of the band closest to ``nm``; raises if ``nm`` is off-axis."""
        if not (self.lo <= nm <= self.hi):
            raise ParameterError(
                f"wavelength {nm:g} nm outside axis range [{self.lo:g}, {self.hi:g}]"
            )
        return int(np.argmin(np.abs(self.wavelengths_nm - nm)))

    def index_range(self, lo_nm: float, hi_nm: float, tol: float = 1e-9) -> tuple[int, int]:
        """Half-open index range of bands with ``lo_nm <= wl <= hi_nm``."""
        wl = self.wavelengths_nm
        start = int(np.searchsorted(wl, lo_nm - tol, side="left"))
        stop = int(np.searchsorted(wl, hi_nm + tol, side="right"))
        return start, stop


@dataclass(eq=False)
class Spectrum:
    values: np.ndarray
    axis: WavelengthAxis

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).ravel()
        if self.values.size != len(self.axis):
            raise ShapeError(
                f"spectrum has {self.values.size} values but axis has {len(self.axis)} bands"
            )

    def __len__(self) -> int:
        return self.values.size

    @property
    def wavelengths_nm(self) -> np.ndarray:
        return self.axis.wavelengths_nm


@dataclass(eq=False)
class Hypercube:
    """H x W x B cube. Data are stored as float32, matching the on-disk format."""

    data: np.ndarray
    axis: WavelengthAxis
    kind: CubeKind = CubeKind.REFLECTANCE

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim != 3:
            raise ShapeError(f"cube data must be 3-D (H, W, B), got shape {data.shape}")
        if data.shape[2] != len(self.axis):
            raise ShapeError(
                f"cube has {data.shape[2]} bands but axis has {len(self.axis)}"
            )
        self.kind = CubeKind(self.kind)
        if self.kind is CubeKind.REFLECTANCE and not np.all(np.isfinite(data)):
            raise ShapeError("reflectance cube contains non-finite values")
        self.data = data

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def bands(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def pixels(self) -> np.ndarray:
        """(H*W, B) view of the pixel spectra in row-major pixel order."""
        return self.data.reshape(-1, self.bands)

    def band(self, nm: float) -> np.ndarray:
        return self.data[:, :, self.axis.nearest_index(nm)]


@dataclass(eq=False)
class SpectraSet:
    """A batch of labelled spectra sharing one axis.

    ``labels`` are class indices into ``class_names``; ``ids`` are instance
    identifiers carried through from the manifest or generator.
    """

    values: np.ndarray
    labels: np.ndarray
    axis: WavelengthAxis
    class_names: tuple[str, ...] = ()
    ids: tuple[str, ...] = field(default=())

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=np.float64))
        self.labels = np.asarray(self.labels, dtype=np.int64).ravel()
        if self.values.shape[0] != self.labels.size:
            raise ShapeError(
                f"{self.values.shape[0]} spectra but {self.labels.size} labels"
            )
        if self.values.shape[1] != len(self.axis):
            raise ShapeError(
                f"spectra have {self.values.shape[1]} bands but axis has {len(self.axis)}"
            )
        if not self.class_names:
            k = int(self.labels.max()) + 1 if self.labels.size else 0
            self.class_names = tuple(f"class_{i}" for i in range(k))
        self.class_names = tuple(self.class_names)
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= len(self.class_names)):
            raise ShapeError("labels out of range for class_names")
        if not self.ids:
            self.ids = tuple(str(i) for i in range(self.labels.size))
        self.ids = tuple(self.ids)
        if len(self.ids) != self.labels.size:
            raise ShapeError("ids and labels differ in length")

    def __len__(self) -> int:
        return self.labels.size

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def subset(self, index) -> "SpectraSet":
        index = np.asarray(index)
        if index.dtype == bool:
            index = np.flatnonzero(index)
        return SpectraSet(
            self.values[index],
            self.labels[index],
            self.axis,
            self.class_names,
            tuple(self.ids[i] for i in index),
        )

    def spectrum(self, i: int) -> Spectrum:
        return Spectrum(self.values[i], self.axis)

    def with_values(self, values: np.ndarray) -> "SpectraSet":
        return SpectraSet(values, self.labels, self.axis, self.class_names, self.ids)
