"""Confusion matrices, accuracy and Cohen's kappa."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import ParameterError, ShapeError


@dataclass(frozen=True, eq=False)
class EvalReport:
    confusion: np.ndarray  # rows = truth, columns = prediction
    accuracy: float
    kappa: float

    @property
    def n(self) -> int:
        return int(self.confusion.sum())

    def per_class_recall(self) -> np.ndarray:
        rows = self.confusion.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(rows > 0, np.diag(self.confusion) / rows, np.nan)

    def write_csv(self, path, class_names: Sequence[str] | None = None) -> None:
        k = self.confusion.shape[0]
        names = list(class_names) if class_names is not None else [str(i) for i in range(k)]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["truth\\pred"] + names)
            for name, row in zip(names, self.confusion):
                writer.writerow([name] + [int(v) for v in row])

    def summary(self) -> dict:
        return {"accuracy": self.accuracy, "kappa": self.kappa, "n": self.n}

    def write_summary(self, path) -> None:
        Path(path).write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")


def confusion_matrix(y_true, y_pred, k: int) -> np.ndarray:
    y_true = np.asarray(y_true, dtype=np.int64).ravel()
    y_pred = np.asarray(y_pred, dtype=np.int64).ravel()
    if y_true.size != y_pred.size:
        raise ShapeError(f"{y_true.size} true labels vs {y_pred.size} predictions")
    for name, y in (("y_true", y_true), ("y_pred", y_pred)):
        if y.size and (y.min() < 0 or y.max() >= k):
            raise ParameterError(f"{name} contains labels outside [0, {k})")
    cm = np.zeros((k, k), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


def kappa_from_confusion(cm: np.ndarray) -> float:
    """Cohen's kappa, ``1 - (1 - p_o) / (1 - p_e)``.

    When ``p_e == 1`` (both raters use a single identical category) kappa
    is 1 for perfect agreement and 0 otherwise.
    """
    cm = np.asarray(cm, dtype=np.float64)
    n = cm.sum()
    if n <= 0:
        raise ParameterError("empty confusion matrix")
    p_o = np.trace(cm) / n
    p_e = float(cm.sum(axis=1) @ cm.sum(axis=0)) / (n * n)
    if p_e >= 1.0:
        return 1.0 if p_o >= 1.0 else 0.0
    return float(1.0 - (1.0 - p_o) / (1.0 - p_e))


def evaluate(y_true, y_pred, k: int) -> EvalReport:
    if np.asarray(y_true).size == 0:
        raise ParameterError("cannot evaluate an empty label vector")
    cm = confusion_matrix(y_true, y_pred, k)
    return EvalReport(cm, float(np.trace(cm) / cm.sum()), kappa_from_confusion(cm))
