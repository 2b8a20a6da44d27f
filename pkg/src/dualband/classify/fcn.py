"""Small fully connected softmax classifier trained with Adam.

Architecture: input -> 64 -> 32 -> k, ReLU on hidden layers, softmax
output, mean categorical cross-entropy loss. Everything is plain numpy
so a single candidate trains in one thread with a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ParameterError, ShapeError, TrainingError
from .standardize import Standardizer

DEFAULT_HIDDEN = (64, 32)


@dataclass(frozen=True)
class FcnConfig:
    epochs: int = 100
    batch: int = 32
    lr: float = 1e-3
    seed: int = 0
    hidden: tuple[int, ...] = DEFAULT_HIDDEN
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8


@dataclass(eq=False)
class FcnModel:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    standardizer: Standardizer
    class_names: tuple[str, ...]
    history: list[float] = field(default_factory=list)

    @property
    def layer_dims(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def n_classes(self) -> int:
        return self.weights[-1].shape[1]

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        Z = self.standardizer.transform(X)
        return softmax(forward(self.weights, self.biases, Z)[-1])

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def cross_entropy(logits: np.ndarray, y: np.ndarray) -> float:
    """Mean of ``-log p[true class]`` over rows."""
    lp = log_softmax(logits)
    return float(-lp[np.arange(y.size), y].mean())


def init_params(dims, rng: np.random.Generator):
    """Uniform init in +-1/sqrt(fan_in), zero biases."""
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return weights, biases


def forward(weights, biases, X):
    """Return the list of layer outputs; the last entry is the logits."""
    acts = [X]
    h = X
    last = len(weights) - 1
    for i, (W, b) in enumerate(zip(weights, biases)):
        h = h @ W + b
        if i < last:
            h = np.maximum(h, 0.0)
        acts.append(h)
    return acts


def loss_and_grads(weights, biases, X, y):
    """Mean cross-entropy and its gradients w.r.t. every weight and bias."""
    acts = forward(weights, biases, X)
    logits = acts[-1]
    n = X.shape[0]
    p = softmax(logits)
    loss = cross_entropy(logits, y)
    delta = p
    delta[np.arange(n), y] -= 1.0
    delta /= n
    gw = [None] * len(weights)
    gb = [None] * len(weights)
    for i in range(len(weights) - 1, -1, -1):
        gw[i] = acts[i].T @ delta
        gb[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ weights[i].T) * (acts[i] > 0)
    return loss, gw, gb


def _check_xy(X, y):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.int64).ravel()
    if X.shape[0] != y.size:
        raise ShapeError(f"X has {X.shape[0]} rows but y has {y.size} labels")
    if np.unique(y).size < 2:
        raise ParameterError("training needs at least two classes")
    if y.min() < 0:
        raise ParameterError("labels must be non-negative class indices")
    return X, y


def train_fcn(X, y, cfg: FcnConfig = FcnConfig(), n_classes: int | None = None,
              class_names: tuple[str, ...] = ()) -> FcnModel:
    X, y = _check_xy(X, y)
    k = int(n_classes if n_classes is not None else y.max() + 1)
    if y.max() >= k:
        raise ParameterError(f"label {y.max()} out of range for {k} classes")
    std = Standardizer.fit(X)
    Z = std.transform(X)
    rng = np.random.default_rng(cfg.seed)
    dims = [Z.shape[1], *cfg.hidden, k]
    weights, biases = init_params(dims, rng)
    params = weights + biases
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    n = Z.shape[0]
    batch = max(1, min(cfg.batch, n))
    step = 0
    history = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch):
            idx = order[start:start + batch]
            loss, gw, gb = loss_and_grads(weights, biases, Z[idx], y[idx])
            if not np.isfinite(loss):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, step {step}",
                    {"epoch": epoch, "step": step, "loss": loss, "history": history[-5:]},
                )
            total += loss * idx.size
            step += 1
            b1c = 1.0 - cfg.beta1 ** step
            b2c = 1.0 - cfg.beta2 ** step
            for p, g, mi, vi in zip(params, gw + gb, m, v):
                mi *= cfg.beta1
                mi += (1.0 - cfg.beta1) * g
                vi *= cfg.beta2
                vi += (1.0 - cfg.beta2) * g * g
                p -= cfg.lr * (mi / b1c) / (np.sqrt(vi / b2c) + cfg.adam_eps)
        history.append(total / n)
    names = tuple(class_names) if class_names else tuple(f"class_{i}" for i in range(k))
    return FcnModel(weights, biases, std, names, history)
