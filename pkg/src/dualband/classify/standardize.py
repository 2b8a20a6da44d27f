from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError


@dataclass(frozen=True, eq=False)
class Standardizer:
    """Per-column z-score fitted on a training split.

    Columns with zero spread keep std = 1 so they map to a constant 0.
    Statistics are computed one column at a time, so a column's scaling
    does not depend on which other columns sit beside it.
    """

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "Standardizer":
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        cols = [np.ascontiguousarray(X[:, j]) for j in range(X.shape[1])]
        mean = np.array([c.mean() for c in cols])
        std = np.array([c.std() for c in cols])
        std = np.where(std > 1e-12 * np.maximum(1.0, np.abs(mean)), std, 1.0)
        return cls(mean, std)

    @property
    def dim(self) -> int:
        return self.mean.size

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.dim:
            raise ShapeError(f"expected {self.dim} features, got {X.shape[1]}")
        return (X - self.mean) / self.std
