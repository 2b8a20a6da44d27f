"""Prediction throughput benchmarks.

Two pipelines are compared: the selected-feature path (slice the chosen
windows, compute the masked statistics, classify) and the full-spectrum
path (classify raw pixel spectra). Timing is wall-clock per image; the
reported figure is the median over repetitions.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..errors import ParameterError, ShapeError
from ..features import DualBandFeatureSet, window_features, window_slice
from ..spectral_core.types import Hypercube, WavelengthAxis
from .models import Model


class FullSpectrumPipeline:
    name = "full-spectrum"

    def features(self, pixels: np.ndarray, axis: WavelengthAxis) -> np.ndarray:
        return pixels

    def cube_features(self, cube: Hypercube, mask: np.ndarray | None) -> np.ndarray:
        return cube.pixels() if mask is None else cube.data[mask]


@dataclass
class SelectedFeaturePipeline:
    fset: DualBandFeatureSet
    name: str = "selected-features"
    _plan: tuple = field(default=(), init=False, repr=False)
    _axis: WavelengthAxis | None = field(default=None, init=False, repr=False)

    def _prepare(self, axis: WavelengthAxis):
        # slice bounds are resolved once per axis, not per image
        if self._axis is None or self._axis != axis:
            self._plan = tuple(
                (window_slice(axis, w), axis.wavelengths_nm[window_slice(axis, w)], m.indices)
                for w, m in zip(self.fset.windows, self.fset.masks)
            )
            self._axis = axis
        return self._plan

    def features(self, pixels: np.ndarray, axis: WavelengthAxis) -> np.ndarray:
        blocks = [window_features(pixels[:, sl], wl, idx) for sl, wl, idx in self._prepare(axis)]
        return np.concatenate(blocks, axis=1)

    def cube_features(self, cube: Hypercube, mask: np.ndarray | None) -> np.ndarray:
        # only the window bands are read from the cube
        blocks = []
        for sl, wl, idx in self._prepare(cube.axis):
            part = cube.data[:, :, sl]
            part = part.reshape(-1, part.shape[2]) if mask is None else part[mask]
            blocks.append(window_features(part, wl, idx))
        return np.concatenate(blocks, axis=1)


@dataclass
class BenchResult:
    method: str
    fps: float
    per_stage_ms: dict
    per_image_ms: list = field(default_factory=list)

    def as_row(self) -> dict:
        row = {"method": self.method, "fps": self.fps}
        row.update({f"{k}_ms": v for k, v in self.per_stage_ms.items()})
        return row


def bench_predict(model: Model, pipeline, cubes: Sequence[Hypercube], repetitions: int = 5,
                  masks: Sequence[np.ndarray] | None = None) -> BenchResult:
    """Median per-image end-to-end prediction time over ``repetitions`` passes.

    Without ``masks`` every pixel is classified.
    """
    if not cubes:
        raise ParameterError("benchmark needs at least one cube")
    if repetitions < 3:
        raise ParameterError(f"repetitions must be >= 3, got {repetitions}")
    if masks is not None and len(masks) != len(cubes):
        raise ShapeError("one mask per cube is required")
    totals, feat_ms, inf_ms = [], [], []
    for _ in range(repetitions):
        t_feat = t_inf = 0.0
        for i, cube in enumerate(cubes):
            t0 = time.perf_counter()
            X = pipeline.cube_features(cube, None if masks is None else np.asarray(masks[i], dtype=bool))
            t1 = time.perf_counter()
            model.predict(X)
            t2 = time.perf_counter()
            t_feat += t1 - t0
            t_inf += t2 - t1
        n = len(cubes)
        feat_ms.append(1e3 * t_feat / n)
        inf_ms.append(1e3 * t_inf / n)
        totals.append(1e3 * (t_feat + t_inf) / n)
    median_total = float(np.median(totals))
    return BenchResult(
        pipeline.name,
        1e3 / max(median_total, 1e-9),
        {"features": float(np.median(feat_ms)), "inference": float(np.median(inf_ms)), "total": median_total},
        totals,
    )
