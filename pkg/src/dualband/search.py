"""Exhaustive subband-window x feature-mask search.

Fine stage: every contiguous run of grid subbands is paired with every
non-zero feature mask and scored by a freshly trained classifier on a
fixed train/test split. Coarse stage: the best non-overlapping windows
from the fine ledger are combined pairwise, each window keeping its own
mask, and the concatenated features are scored the same way. The first
pair reaching the accuracy target (with the fewest features) wins.

Every candidate is a pure function of (data, windows, masks, config), so
candidates can be spread over worker processes and merged by sorting.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

from .classify.knn import vote_from_distances
from .classify.models import ClassifierKind, class_probabilities, mean_log_loss, train
from .classify.standardize import Standardizer
from .errors import LoadError, NumericError, ParameterError, ShapeError
from .features import (
    FULL_MASK,
    MIN_SAMPLES,
    N_FEATURES,
    DualBandFeatureSet,
    FeatureMask,
    SubbandWindow,
    assemble_matrix,
    window_features,
    window_slice,
)
from .spectral_core.types import SpectraSet, WavelengthAxis

logger = logging.getLogger(__name__)

LEDGER_COLUMNS = ("windows", "masks", "accuracy", "loss", "dim", "seed", "classifier", "flag")
FLAG_DIVERGED = "diverged"
FLAG_BELOW_TARGET = "below-target"


@dataclass(frozen=True)
class SearchGrid:
    span_lo_nm: float = 450.0
    span_hi_nm: float = 850.0
    b_w: float = 20.0
    n_subbands: int = 20

    def __post_init__(self):
        if self.n_subbands < 1 or self.b_w <= 0:
            raise ParameterError("grid needs n_subbands >= 1 and b_w > 0")
        if not math.isclose(self.n_subbands * self.b_w, self.span_hi_nm - self.span_lo_nm,
                            rel_tol=0, abs_tol=1e-9):
            raise ParameterError(
                f"{self.n_subbands} x {self.b_w:g} nm does not tile "
                f"{self.span_lo_nm:g}-{self.span_hi_nm:g} nm"
            )

    @classmethod
    def from_span(cls, lo: float, hi: float, b_w: float = 20.0) -> "SearchGrid":
        return cls(lo, hi, b_w, int(round((hi - lo) / b_w)))


@dataclass(frozen=True)
class SearchConfig:
    q: int = 10
    accuracy_target: float = 0.95
    overlap_tolerance_nm: float = 20.0
    classifier: str = ClassifierKind.FCN.value
    epochs: int = 100
    batch: int = 32
    lr: float = 1e-3
    seed: int = 0
    knn_k: int = 5
    coarse_top_masks: int = 50
    coarse_max_dim: int = 12
    coarse_block: int = 256

    def __post_init__(self):
        if self.q < 1:
            raise ParameterError("q must be >= 1")
        if not 0 < self.accuracy_target <= 1:
            raise ParameterError("accuracy_target must be in (0, 1]")
        ClassifierKind(self.classifier)
        if self.coarse_block < 1:
            raise ParameterError("coarse_block must be >= 1")


@dataclass(frozen=True)
class SearchRecord:
    windows: tuple[SubbandWindow, ...]
    masks: tuple[FeatureMask, ...]
    test_accuracy: float
    test_loss: float
    feature_dim: int
    seed: int
    classifier: str = ClassifierKind.FCN.value
    flag: str = ""

    def sort_key(self):
        loss = self.test_loss if math.isfinite(self.test_loss) else math.inf
        return (
            -self.test_accuracy,
            self.feature_dim,
            loss,
            tuple((w.lo_nm, w.hi_nm) for w in self.windows),
            tuple(m.bits for m in self.masks),
        )

    def to_featureset(self, overlap_tolerance_nm: float = 20.0) -> DualBandFeatureSet:
        meta = {"accuracy": self.test_accuracy, "loss": self.test_loss,
                "classifier": self.classifier, "seed": self.seed, "flag": self.flag}
        return DualBandFeatureSet(self.windows, self.masks, meta, overlap_tolerance_nm)

    def to_row(self) -> list[str]:
        return [
            "|".join(str(w) for w in self.windows),
            "|".join(str(m) for m in self.masks),
            repr(float(self.test_accuracy)),
            repr(float(self.test_loss)),
            str(self.feature_dim),
            str(self.seed),
            self.classifier,
            self.flag,
        ]

    @classmethod
    def from_row(cls, row: Sequence[str]) -> "SearchRecord":
        if len(row) < 6:
            raise LoadError(f"ledger row has {len(row)} fields, expected at least 6")
        windows = tuple(SubbandWindow.parse(t) for t in row[0].split("|"))
        masks = tuple(FeatureMask.parse(t) for t in row[1].split("|"))
        classifier = row[6] if len(row) > 6 else ClassifierKind.FCN.value
        flag = row[7] if len(row) > 7 else ""
        return cls(windows, masks, float(row[2]), float(row[3]), int(row[4]), int(row[5]), classifier, flag)

    def to_json(self) -> dict:
        return {
            "windows": [[w.lo_nm, w.hi_nm] for w in self.windows],
            "masks": [list(m.names) for m in self.masks],
            "accuracy": self.test_accuracy,
            "loss": self.test_loss if math.isfinite(self.test_loss) else None,
            "dim": self.feature_dim,
            "seed": self.seed,
            "classifier": self.classifier,
            "flag": self.flag,
        }


@dataclass
class SearchLedger:
    records: list[SearchRecord]
    stage: str = "fine"

    def __post_init__(self):
        if self.stage not in ("fine", "coarse"):
            raise ParameterError(f"unknown ledger stage {self.stage!r}")

    def __len__(self) -> int:
        return len(self.records)

    def sorted(self) -> "SearchLedger":
        return SearchLedger(sorted(self.records, key=SearchRecord.sort_key), self.stage)

    def best(self) -> SearchRecord:
        if not self.records:
            raise ParameterError("ledger is empty")
        return min(self.records, key=SearchRecord.sort_key)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, delimiter=";", lineterminator="\n")
            writer.writerow(LEDGER_COLUMNS)
            for r in self.records:
                writer.writerow(r.to_row())

    @classmethod
    def read_csv(cls, path, stage: str = "fine") -> "SearchLedger":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh, delimiter=";"))
        if not rows or tuple(rows[0][:6]) != LEDGER_COLUMNS[:6]:
            raise LoadError(f"{path}: not a search ledger")
        return cls([SearchRecord.from_row(r) for r in rows[1:] if r], stage)

    def write_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for r in self.records:
                doc = r.to_json()
                doc["stage"] = self.stage
                fh.write(json.dumps(doc, sort_keys=True) + "\n")


@dataclass
class SearchData:
    train: SpectraSet
    test: SpectraSet

    def __post_init__(self):
        if len(self.train) == 0 or len(self.test) == 0:
            raise ParameterError("train and test splits must both be non-empty")
        if self.train.axis != self.test.axis:
            raise ShapeError("train and test spectra use different wavelength axes")
        if self.train.class_names != self.test.class_names:
            raise ShapeError("train and test use different class vocabularies")
        if np.unique(self.train.labels).size < 2:
            raise ParameterError("training split needs at least two classes")

    @property
    def axis(self) -> WavelengthAxis:
        return self.train.axis

    @property
    def n_classes(self) -> int:
        return self.train.n_classes


# --------------------------------------------------------------------------
# enumeration


def enumerate_windows(grid: SearchGrid) -> list[SubbandWindow]:
    """All contiguous runs of grid subbands, by start then by width."""
    out = []
    for s in range(grid.n_subbands):
        for e in range(s, grid.n_subbands):
            out.append(SubbandWindow(grid.span_lo_nm + s * grid.b_w,
                                     grid.span_lo_nm + (e + 1) * grid.b_w))
    return out


def enumerate_masks() -> list[FeatureMask]:
    return [FeatureMask(bits) for bits in range(1, FULL_MASK + 1)]


def usable_windows(windows: Iterable[SubbandWindow], axis: WavelengthAxis) -> list[SubbandWindow]:
    """Drop windows that miss the axis or hold too few bands for the statistics."""
    keep = []
    for w in windows:
        try:
            sl = window_slice(axis, w)
        except ParameterError:
            continue
        if sl.stop - sl.start >= MIN_SAMPLES:
            keep.append(w)
    return keep


# --------------------------------------------------------------------------
# candidate evaluation


def _score_matrices(Xtr, ytr, Xte, yte, n_classes: int, cfg: SearchConfig):
    try:
        model = train(cfg.classifier, Xtr, ytr, n_classes=n_classes, seed=cfg.seed,
                      epochs=cfg.epochs, batch=cfg.batch, lr=cfg.lr, knn_k=cfg.knn_k)
        proba = class_probabilities(model, Xte)
        pred = model.predict(Xte)
        loss = mean_log_loss(proba, yte)
    except NumericError as exc:
        logger.debug("candidate diverged: %s", exc)
        return 0.0, math.inf, FLAG_DIVERGED
    if not math.isfinite(loss):
        return 0.0, math.inf, FLAG_DIVERGED
    return float(np.mean(pred == yte)), loss, ""


def evaluate_candidate(train_set: SpectraSet, test_set: SpectraSet, windows: Sequence[SubbandWindow],
                       masks: Sequence[FeatureMask], cfg: SearchConfig) -> SearchRecord:
    """Score one (windows, masks) candidate from raw spectra.

    Features are assembled per window, z-scored on the training split
    inside the classifier, and the classifier is re-initialised from
    ``cfg.seed``. Divergence is recorded as accuracy 0 with a flag.
    """
    data = SearchData(train_set, test_set)
    fset = DualBandFeatureSet(tuple(windows), tuple(masks), overlap_tolerance_nm=math.inf)
    Xtr = assemble_matrix(data.train.values, data.axis, fset)
    Xte = assemble_matrix(data.test.values, data.axis, fset)
    acc, loss, flag = _score_matrices(Xtr, data.train.labels, Xte, data.test.labels, data.n_classes, cfg)
    return SearchRecord(fset.windows, fset.masks, acc, loss, fset.feature_dim, cfg.seed, cfg.classifier, flag)


@dataclass
class _WindowCache:
    raw_train: np.ndarray
    raw_test: np.ndarray
    sq_diffs: list[np.ndarray] | None = None


@dataclass
class CandidateEvaluator:
    """Evaluates many candidates over shared per-window feature tables.

    Produces exactly the records ``evaluate_candidate`` would: features are
    computed once per window and column-selected per mask, and for k-NN
    the per-feature squared-difference blocks are summed in column order.
    """

    data: SearchData
    cfg: SearchConfig
    max_cached: int = 32
    _cache: dict = field(default_factory=dict, init=False, repr=False)

    def window(self, w: SubbandWindow) -> _WindowCache:
        entry = self._cache.get(w)
        if entry is None:
            if len(self._cache) >= self.max_cached:
                self._cache.pop(next(iter(self._cache)))
            sl = window_slice(self.data.axis, w)
            wl = self.data.axis.wavelengths_nm[sl]
            entry = _WindowCache(window_features(self.data.train.values[:, sl], wl),
                                 window_features(self.data.test.values[:, sl], wl))
            if self.cfg.classifier == ClassifierKind.KNN.value:
                std = Standardizer.fit(entry.raw_train)
                ztr, zte = std.transform(entry.raw_train), std.transform(entry.raw_test)
                entry.sq_diffs = [np.square(zte[:, j, None] - ztr[None, :, j]) for j in range(N_FEATURES)]
            self._cache[w] = entry
        return entry

    def evaluate(self, windows: Sequence[SubbandWindow], masks: Sequence[FeatureMask]) -> SearchRecord:
        windows, masks = tuple(windows), tuple(masks)
        dim = sum(m.popcount for m in masks)
        ytr, yte = self.data.train.labels, self.data.test.labels
        caches = [self.window(w) for w in windows]
        if self.cfg.classifier == ClassifierKind.KNN.value:
            d = np.zeros((yte.size, ytr.size))
            for c, m in zip(caches, masks):
                for j in m.indices:
                    d += c.sq_diffs[j]
            pred, proba = vote_from_distances(d, ytr, self.data.n_classes, self.cfg.knn_k)
            acc, loss, flag = float(np.mean(pred == yte)), mean_log_loss(proba, yte), ""
        else:
            Xtr = np.concatenate([c.raw_train[:, list(m.indices)] for c, m in zip(caches, masks)], axis=1)
            Xte = np.concatenate([c.raw_test[:, list(m.indices)] for c, m in zip(caches, masks)], axis=1)
            acc, loss, flag = _score_matrices(Xtr, ytr, Xte, yte, self.data.n_classes, self.cfg)
        return SearchRecord(windows, masks, acc, loss, dim, self.cfg.seed, self.cfg.classifier, flag)


# worker-process state, populated by the pool initializer
_WORKER: dict = {}


def _init_worker(data: SearchData, cfg: SearchConfig) -> None:
    _WORKER["evaluator"] = CandidateEvaluator(data, cfg)


def _fine_task(w: SubbandWindow) -> list[SearchRecord]:
    ev: CandidateEvaluator = _WORKER["evaluator"]
    out = [ev.evaluate((w,), (m,)) for m in enumerate_masks()]
    ev._cache.pop(w, None)
    return out


def _pair_task(items: list) -> list[SearchRecord]:
    ev: CandidateEvaluator = _WORKER["evaluator"]
    return [ev.evaluate(ws, ms) for ws, ms in items]


class _Runner:
    """Maps tasks serially (jobs=1) or over a process pool; order is preserved."""

    def __init__(self, data: SearchData, cfg: SearchConfig, jobs: int):
        self.jobs = max(1, int(jobs))
        self.pool = None
        if self.jobs > 1:
            self.pool = ProcessPoolExecutor(self.jobs, initializer=_init_worker, initargs=(data, cfg))
        else:
            _init_worker(data, cfg)

    def map(self, fn, items):
        if self.pool is None:
            return [fn(it) for it in items]
        return list(self.pool.map(fn, items))

    def close(self):
        if self.pool is not None:
            self.pool.shutdown()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def run_fine_stage(data: SearchData, grid: SearchGrid, cfg: SearchConfig, jobs: int = 1) -> SearchLedger:
    windows = usable_windows(enumerate_windows(grid), data.axis)
    if not windows:
        raise ParameterError("no grid window intersects the wavelength axis")
    logger.info("fine stage: %d windows x %d masks, classifier=%s, jobs=%d",
                len(windows), FULL_MASK, cfg.classifier, jobs)
    records: list[SearchRecord] = []
    with _Runner(data, cfg, jobs) as runner:
        for chunk in runner.map(_fine_task, windows):
            records.extend(chunk)
    return SearchLedger(records, "fine").sorted()


def select_top_q(ledger: SearchLedger, cfg: SearchConfig) -> list[SearchRecord]:
    """Best records whose windows pairwise overlap by at most the tolerance.

    The ranked ledger is scanned from the top; a record is kept when its
    window is compatible with every record already kept, until ``q`` are
    kept. Records below an already-kept identical window are skipped.
    """
    if not ledger.records:
        raise ParameterError("cannot select from an empty ledger")
    kept: list[SearchRecord] = []
    for rec in ledger.sorted().records:
        if rec.flag == FLAG_DIVERGED:
            continue
        ok = all(
            a.overlap_nm(b) <= cfg.overlap_tolerance_nm + 1e-9 and a != b
            for k in kept for a in k.windows for b in rec.windows
        )
        if ok:
            kept.append(rec)
            if len(kept) >= cfg.q:
                break
    return kept


def _mask_pool(ledger: SearchLedger, w: SubbandWindow, top: int) -> list[tuple[int, FeatureMask]]:
    ranked = [r.masks[0] for r in ledger.sorted().records if r.windows == (w,) and r.flag != FLAG_DIVERGED]
    if top <= 0 or top >= FULL_MASK:
        seen = {m.bits for m in ranked}
        ranked = ranked + [m for m in enumerate_masks() if m.bits not in seen]
        return list(enumerate(ranked))
    return list(enumerate(ranked[:top]))


@dataclass
class CoarseResult:
    ledger: SearchLedger
    featureset: DualBandFeatureSet
    best: SearchRecord
    reached_target: bool


def run_coarse_stage(data: SearchData, candidates: Sequence[SearchRecord], cfg: SearchConfig,
                     fine_ledger: SearchLedger | None = None, jobs: int = 1) -> CoarseResult:
    """Pairwise concatenation of candidate windows with per-window mask sweeps.

    Each window's mask pool is its own top ``cfg.coarse_top_masks`` masks
    from the fine ledger (all 511 when that is <= 0 or >= 511, or when no
    fine ledger is given). Combinations above ``cfg.coarse_max_dim``
    features are skipped. Combinations are evaluated in blocks ordered by
    feature count, and the search stops after the first block containing
    a record at or above ``cfg.accuracy_target``.
    """
    candidates = list(candidates)
    if not candidates:
        raise ParameterError("coarse stage needs at least one candidate")
    if len(candidates) < 2:
        only = candidates[0]
        if only.test_accuracy < cfg.accuracy_target:
            raise ParameterError(
                "coarse stage needs >= 2 candidate windows, or one that already meets the target"
            )
        ledger = SearchLedger([only], "coarse")
        return CoarseResult(ledger, only.to_featureset(cfg.overlap_tolerance_nm), only, True)

    pools = {}
    for rec in candidates:
        w = rec.windows[0]
        if fine_ledger is None:
            pools[w] = list(enumerate(enumerate_masks()))
        else:
            pools[w] = _mask_pool(fine_ledger, w, cfg.coarse_top_masks)

    combos = []
    for p, (ra, rb) in enumerate(combinations(candidates, 2)):
        wa, wb = sorted((ra.windows[0], rb.windows[0]))
        for r1, m1 in pools[wa]:
            for r2, m2 in pools[wb]:
                dim = m1.popcount + m2.popcount
                if dim > cfg.coarse_max_dim:
                    continue
                combos.append(((dim, p, r1 + r2, r1), (wa, wb), (m1, m2)))
    combos.sort(key=lambda c: c[0])
    logger.info("coarse stage: %d candidate windows, %d combinations", len(candidates), len(combos))

    records: list[SearchRecord] = []
    reached = False
    block = cfg.coarse_block
    with _Runner(data, cfg, jobs) as runner:
        for start in range(0, len(combos), block):
            items = [(ws, ms) for _, ws, ms in combos[start:start + block]]
            n = runner.jobs
            chunks = [items[i::n] for i in range(n)] if n > 1 else [items]
            for chunk in runner.map(_pair_task, chunks):
                records.extend(chunk)
            if any(r.test_accuracy >= cfg.accuracy_target for r in records):
                reached = True
                break
    if not records:
        raise ParameterError("no coarse combination fits within coarse_max_dim")
    ledger = SearchLedger(records, "coarse").sorted()
    best = ledger.best()
    if not reached:
        best = replace(best, flag=FLAG_BELOW_TARGET)
        logger.warning("no pair reached accuracy %.3f; best %.4f", cfg.accuracy_target, best.test_accuracy)
    return CoarseResult(ledger, best.to_featureset(cfg.overlap_tolerance_nm), best, reached)


@dataclass
class SearchResult:
    fine: SearchLedger
    candidates: list[SearchRecord]
    coarse: CoarseResult

    @property
    def featureset(self) -> DualBandFeatureSet:
        return self.coarse.featureset


def run_search(data: SearchData, grid: SearchGrid, cfg: SearchConfig, jobs: int = 1) -> SearchResult:
    fine = run_fine_stage(data, grid, cfg, jobs)
    candidates = select_top_q(fine, cfg)
    coarse = run_coarse_stage(data, candidates, cfg, fine, jobs)
    return SearchResult(fine, candidates, coarse)


def config_dict(grid: SearchGrid, cfg: SearchConfig) -> dict:
    return {"grid": asdict(grid), "search": asdict(cfg)}
