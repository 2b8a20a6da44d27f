"""k-nearest-neighbour classifier, the fast option for exhaustive searches.

Training is a copy of the z-scored data, so one candidate costs a single
distance matrix. Squared distances are accumulated column by column in a
fixed order, which lets the search reuse per-feature difference blocks
and still get bit-identical results.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ParameterError, ShapeError
from .standardize import Standardizer

DEFAULT_K = 5


@dataclass(frozen=True)
class KnnConfig:
    k: int = DEFAULT_K
    seed: int = 0  # unused; kept so every config records a seed


def column_sq_diffs(A: np.ndarray, B: np.ndarray) -> list[np.ndarray]:
    """Per-column ``(a - b)^2`` blocks of shape (len(A), len(B))."""
    return [np.square(A[:, j, None] - B[None, :, j]) for j in range(A.shape[1])]


def sq_distances(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    d = np.zeros((A.shape[0], B.shape[0]))
    for block in column_sq_diffs(A, B):
        d += block
    return d


def vote_from_distances(d: np.ndarray, y_train: np.ndarray, n_classes: int, k: int):
    """Labels and smoothed vote probabilities from a distance matrix.

    Neighbours are taken in (distance, training index) order; vote ties go
    to the lowest class index. Probabilities are ``(votes + 1) / (k + K)``.
    """
    k = min(k, d.shape[1])
    nn = np.argsort(d, axis=1, kind="stable")[:, :k]
    votes = np.zeros((d.shape[0], n_classes))
    rows = np.repeat(np.arange(d.shape[0]), k)
    np.add.at(votes, (rows, y_train[nn].ravel()), 1.0)
    labels = np.argmax(votes, axis=1)
    proba = (votes + 1.0) / (k + n_classes)
    return labels, proba


@dataclass(eq=False)
class KnnModel:
    train_z: np.ndarray
    train_y: np.ndarray
    k: int
    standardizer: Standardizer
    class_names: tuple[str, ...]

    @property
    def input_dim(self) -> int:
        return self.standardizer.dim

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def _vote(self, X):
        Z = self.standardizer.transform(X)
        return vote_from_distances(sq_distances(Z, self.train_z), self.train_y, self.n_classes, self.k)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return self._vote(X)[1]

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self._vote(X)[0]


def train_knn(X, y, cfg: KnnConfig = KnnConfig(), n_classes: int | None = None,
              class_names: tuple[str, ...] = ()) -> KnnModel:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.int64).ravel()
    if X.shape[0] != y.size:
        raise ShapeError(f"X has {X.shape[0]} rows but y has {y.size} labels")
    if np.unique(y).size < 2:
        raise ParameterError("training needs at least two classes")
    if cfg.k < 1:
        raise ParameterError("k must be >= 1")
    k_cls = int(n_classes if n_classes is not None else y.max() + 1)
    std = Standardizer.fit(X)
    names = tuple(class_names) if class_names else tuple(f"class_{i}" for i in range(k_cls))
    return KnnModel(std.transform(X), y.copy(), cfg.k, std, names)
