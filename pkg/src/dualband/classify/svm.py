"""Polynomial-kernel SVM trained by sequential minimal optimization.

Multiclass prediction uses one-vs-one voting; vote ties go to the lowest
class index. The binary solver follows the usual SMO recipe with
second-order working-set selection and stops once the maximal KKT
violation drops below ``tol``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from ..errors import NumericError, ParameterError, ShapeError
from .standardize import Standardizer

TAU = 1e-12
PREDICT_BLOCK = 2048


@dataclass(frozen=True)
class SvmConfig:
    C: float = 1.0
    degree: int = 3
    gamma: float | None = None  # None -> 1 / n_features
    coef0: float = 1.0
    tol: float = 1e-3
    max_iter: int = 100_000
    seed: int = 0  # the solver is deterministic; kept for record keeping


def poly_kernel(A: np.ndarray, B: np.ndarray, gamma: float, coef0: float, degree: int) -> np.ndarray:
    K = A @ B.T
    K *= gamma
    K += coef0
    if degree == 3:
        sq = K * K
        sq *= K
        return sq
    return K ** degree


@dataclass
class BinarySolution:
    alpha: np.ndarray
    rho: float
    iterations: int


def smo_binary(K: np.ndarray, y: np.ndarray, C: float, tol: float = 1e-3,
               max_iter: int = 100_000) -> BinarySolution:
    """Solve ``min 1/2 a'Qa - e'a`` s.t. ``0 <= a <= C``, ``y'a = 0``.

    ``Q = (y y') * K``. Returns the dual variables and the offset ``rho``
    so that ``f(x) = sum_i a_i y_i K(x_i, x) - rho``.
    """
    n = y.size
    yf = y.astype(np.float64)
    Q = K * np.outer(yf, yf)
    QD = np.diag(Q).copy()
    alpha = np.zeros(n)
    G = -np.ones(n)
    pos = yf > 0
    it = 0
    while it < max_iter:
        upper = alpha >= C
        lower = alpha <= 0
        # I_up: y=+1 not at C, or y=-1 not at 0
        in_up = np.where(pos, ~upper, ~lower)
        in_low = np.where(pos, ~lower, ~upper)
        minus_yG = -yf * G
        if not in_up.any() or not in_low.any():
            break
        cand = np.where(in_up, minus_yG, -np.inf)
        i = int(np.argmax(cand))
        gmax = cand[i]
        gmin = np.min(np.where(in_low, minus_yG, np.inf))
        if gmax - gmin < tol:
            break
        b = gmax - minus_yG
        ok = in_low & (b > 0)
        if not ok.any():
            break
        a = QD[i] + QD - 2.0 * yf[i] * yf * Q[i]
        a = np.where(a > 0, a, TAU)
        obj = np.where(ok, -(b * b) / a, np.inf)
        j = int(np.argmin(obj))

        old_ai, old_aj = alpha[i], alpha[j]
        Qij = Q[i, j]
        if yf[i] != yf[j]:
            quad = QD[i] + QD[j] + 2.0 * Qij
            quad = quad if quad > 0 else TAU
            delta = (-G[i] - G[j]) / quad
            diff = alpha[i] - alpha[j]
            ai, aj = alpha[i] + delta, alpha[j] + delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            elif ai < 0:
                ai, aj = 0.0, -diff
            if diff > 0:
                if ai > C:
                    ai, aj = C, C - diff
            elif aj > C:
                aj, ai = C, C + diff
        else:
            quad = QD[i] + QD[j] - 2.0 * Qij
            quad = quad if quad > 0 else TAU
            delta = (G[i] - G[j]) / quad
            total = alpha[i] + alpha[j]
            ai, aj = alpha[i] - delta, alpha[j] + delta
            if total > C:
                if ai > C:
                    ai, aj = C, total - C
            elif aj < 0:
                aj, ai = 0.0, total
            if total > C:
                if aj > C:
                    aj, ai = C, total - C
            elif ai < 0:
                ai, aj = 0.0, total
        alpha[i], alpha[j] = ai, aj
        G += Q[:, i] * (ai - old_ai) + Q[:, j] * (aj - old_aj)
        it += 1
    if not np.all(np.isfinite(G)):
        raise NumericError("SMO gradient became non-finite")

    yG = yf * G
    upper = alpha >= C
    lower = alpha <= 0
    free = ~upper & ~lower
    if free.any():
        rho = float(yG[free].mean())
    else:
        ub_set = (upper & ~pos) | (lower & pos)
        lb_set = (upper & pos) | (lower & ~pos)
        ub = yG[ub_set].min() if ub_set.any() else np.inf
        lb = yG[lb_set].max() if lb_set.any() else -np.inf
        rho = float((ub + lb) / 2)
    return BinarySolution(alpha, rho, it)


@dataclass(eq=False)
class SvmModel:
    """One-vs-one SVM.

    ``support_vectors`` holds the union of all pairs' support vectors (in
    standardized units); ``dual_coef[:, p]`` holds ``alpha * y`` for pair
    ``p`` over that union (zero where a vector is not used by the pair).
    """

    support_vectors: np.ndarray
    dual_coef: np.ndarray
    rho: np.ndarray
    pairs: list[tuple[int, int]]
    gamma: float
    coef0: float
    degree: int
    C: float
    standardizer: Standardizer
    class_names: tuple[str, ...]
    n_iter: list[int] = field(default_factory=list)

    @property
    def input_dim(self) -> int:
        return self.standardizer.dim

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        Z = self.standardizer.transform(X)
        out = np.empty((Z.shape[0], len(self.pairs)))
        # row blocks keep the kernel block cache-sized for pixel-scale inputs
        for start in range(0, Z.shape[0], PREDICT_BLOCK):
            K = poly_kernel(Z[start:start + PREDICT_BLOCK], self.support_vectors,
                            self.gamma, self.coef0, self.degree)
            out[start:start + PREDICT_BLOCK] = K @ self.dual_coef
        out -= self.rho
        return out

    def votes(self, X: np.ndarray) -> np.ndarray:
        D = self.decision_function(X)
        votes = np.zeros((D.shape[0], self.n_classes), dtype=np.int64)
        for p, (a, b) in enumerate(self.pairs):
            win_a = D[:, p] > 0
            votes[:, a] += win_a
            votes[:, b] += ~win_a
        return votes

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.votes(X), axis=1)


def train_svm(X, y, cfg: SvmConfig = SvmConfig(), n_classes: int | None = None,
              class_names: tuple[str, ...] = ()) -> SvmModel:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.int64).ravel()
    if X.shape[0] != y.size:
        raise ShapeError(f"X has {X.shape[0]} rows but y has {y.size} labels")
    present = np.unique(y)
    if present.size < 2:
        raise ParameterError("SVM training needs at least two classes in y")
    k = int(n_classes if n_classes is not None else y.max() + 1)
    std = Standardizer.fit(X)
    Z = std.transform(X)
    gamma = cfg.gamma if cfg.gamma is not None else 1.0 / Z.shape[1]
    K = poly_kernel(Z, Z, gamma, cfg.coef0, cfg.degree)

    used = np.zeros(y.size, dtype=bool)
    pair_solutions = []
    for a, b in combinations(present.tolist(), 2):
        idx = np.flatnonzero((y == a) | (y == b))
        yy = np.where(y[idx] == a, 1, -1)
        sol = smo_binary(K[np.ix_(idx, idx)], yy, cfg.C, cfg.tol, cfg.max_iter)
        sv = sol.alpha > 0
        if not sv.any():
            raise NumericError(f"pair ({a}, {b}) produced no support vectors")
        used[idx[sv]] = True
        pair_solutions.append(((a, b), idx, yy, sol))

    sv_index = np.flatnonzero(used)
    position = np.full(y.size, -1)
    position[sv_index] = np.arange(sv_index.size)
    coef = np.zeros((sv_index.size, len(pair_solutions)))
    rho = np.zeros(len(pair_solutions))
    pairs = []
    n_iter = []
    for p, ((a, b), idx, yy, sol) in enumerate(pair_solutions):
        sv = sol.alpha > 0
        coef[position[idx[sv]], p] = sol.alpha[sv] * yy[sv]
        rho[p] = sol.rho
        pairs.append((a, b))
        n_iter.append(sol.iterations)
    names = tuple(class_names) if class_names else tuple(f"class_{i}" for i in range(k))
    return SvmModel(Z[sv_index].copy(), coef, rho, pairs, float(gamma), cfg.coef0,
                    cfg.degree, cfg.C, std, names, n_iter)
