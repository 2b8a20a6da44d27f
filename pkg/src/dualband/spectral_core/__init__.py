"""Hypercube, spectrum and preprocessing primitives."""

from .io import read_axis, read_hsc, read_spectra_csv, write_axis, write_hsc, write_spectra_csv
from .preprocess import (
    EPS,
    calibrate,
    msc,
    msc_correct,
    preprocess_values,
    savgol,
    savgol_smooth,
)
from .segment import instance_mean_spectrum, ndvi, ndvi_segment, otsu_threshold
from .types import CubeKind, Hypercube, SpectraSet, Spectrum, WavelengthAxis

__all__ = [
    "EPS",
    "CubeKind",
    "Hypercube",
    "SpectraSet",
    "Spectrum",
    "WavelengthAxis",
    "calibrate",
    "instance_mean_spectrum",
    "msc",
    "msc_correct",
    "ndvi",
    "ndvi_segment",
    "otsu_threshold",
    "preprocess_values",
    "read_axis",
    "read_hsc",
    "read_spectra_csv",
    "savgol",
    "savgol_smooth",
    "write_axis",
    "write_hsc",
    "write_spectra_csv",
]
