from __future__ import annotations

import math
import time

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dualband.errors import ParameterError
from dualband.features import FULL_MASK, FeatureMask, SubbandWindow
from dualband.search import (
    FLAG_DIVERGED,
    CandidateEvaluator,
    SearchConfig,
    SearchData,
    SearchGrid,
    SearchLedger,
    SearchRecord,
    enumerate_masks,
    enumerate_windows,
    evaluate_candidate,
    run_coarse_stage,
    run_fine_stage,
    select_top_q,
)

SMALL_GRID = SearchGrid(510.0, 670.0, 40.0, 4)


def test_enumeration_counts():
    t0 = time.perf_counter()
    windows = enumerate_windows(SearchGrid())
    masks = enumerate_masks()
    assert len(windows) == 210 and len(masks) == 511
    assert len(set(windows)) == 210
    assert masks[0].bits == 1 and masks[-1].bits == FULL_MASK
    assert time.perf_counter() - t0 < 1.0


@given(st.integers(1, 25))
def test_window_count_is_triangular(n):
    grid = SearchGrid(450.0, 450.0 + 10.0 * n, 10.0, n)
    ws = enumerate_windows(grid)
    assert len(ws) == n * (n + 1) // 2
    assert all(w.lo_nm >= 450 and w.hi_nm <= grid.span_hi_nm for w in ws)


def test_grid_must_tile_span():
    with pytest.raises(ParameterError):
        SearchGrid(450, 850, 30, 20)
    assert SearchGrid.from_span(450, 850, 20) == SearchGrid()


def test_config_defaults():
    cfg = SearchConfig()
    assert (cfg.q, cfg.accuracy_target, cfg.overlap_tolerance_nm) == (10, 0.95, 20.0)
    with pytest.raises(ValueError):
        SearchConfig(classifier="tree")


def _rec(lo, hi, acc, bits=1, loss=1.0):
    m = FeatureMask(bits)
    return SearchRecord((SubbandWindow(lo, hi),), (m,), acc, loss, m.popcount, 0, "knn")


def test_sort_key_ordering():
    recs = [_rec(510, 530, 0.9, 3), _rec(510, 530, 0.9, 1, 2.0), _rec(490, 530, 0.9, 1, 2.0),
            _rec(510, 530, 0.95, 511), _rec(510, 530, 0.9, 1, 1.5)]
    order = SearchLedger(recs).sorted().records
    assert order[0].test_accuracy == 0.95
    assert [r.test_loss for r in order[1:3]] == [1.5, 2.0]
    assert order[2].windows[0].lo_nm == 490
    assert order[-1].feature_dim == 2


@given(st.lists(st.tuples(st.integers(0, 19), st.integers(1, 6), st.floats(0, 1)), min_size=1, max_size=60),
       st.integers(1, 10))
def test_select_top_q_properties(items, q):
    recs = [_rec(450 + 20 * s, 450 + 20 * min(20, s + w), acc) for s, w, acc in items]
    cfg = SearchConfig(q=q)
    kept = select_top_q(SearchLedger(recs), cfg)
    assert 1 <= len(kept) <= q
    ranked = SearchLedger(recs).sorted().records
    assert kept[0] == ranked[0]
    for i, a in enumerate(kept):
        for b in kept[i + 1:]:
            assert a.windows[0].overlap_nm(b.windows[0]) <= 20.0 + 1e-9
            assert a.windows[0] != b.windows[0]
    pos = [ranked.index(k) for k in kept]
    assert pos == sorted(pos)


def test_select_top_q_skips_diverged():
    bad = SearchRecord((SubbandWindow(450, 470),), (FeatureMask(1),), 0.0, math.inf, 1, 0, "fcn", FLAG_DIVERGED)
    kept = select_top_q(SearchLedger([bad, _rec(500, 520, 0.5)]), SearchConfig())
    assert [k.windows[0].lo_nm for k in kept] == [500]


@pytest.mark.parametrize("classifier", ["knn", "svm", "fcn"])
def test_fast_evaluator_matches_reference_path(small_split, classifier):
    cfg = SearchConfig(classifier=classifier, epochs=5, seed=11)
    ev = CandidateEvaluator(small_split, cfg)
    cases = [((SubbandWindow(510, 670),), (FeatureMask.parse("argmax"),)),
             ((SubbandWindow(510, 590),), (FeatureMask(FULL_MASK),)),
             ((SubbandWindow(510, 630), SubbandWindow(670, 790)),
              (FeatureMask.parse("max+argmax"), FeatureMask.parse("min+argmin+kurtosis")))]
    for ws, ms in cases:
        fast = ev.evaluate(ws, ms)
        ref = evaluate_candidate(small_split.train, small_split.test, ws, ms, cfg)
        assert fast == ref


def test_fine_stage_serial_equals_parallel(small_split):
    cfg = SearchConfig(classifier="knn")
    serial = run_fine_stage(small_split, SMALL_GRID, cfg, jobs=1)
    parallel = run_fine_stage(small_split, SMALL_GRID, cfg, jobs=2)
    assert len(serial) == 10 * 511
    assert serial.records == parallel.records


def test_fine_stage_ranks_planted_feature_first(small_split):
    ledger = run_fine_stage(small_split, SMALL_GRID, SearchConfig(classifier="knn"))
    top = ledger.records[0]
    assert 2 in top.masks[0].indices  # argmax
    assert top.test_accuracy >= 0.95


def test_coarse_stage(small_split):
    cfg = SearchConfig(classifier="knn", q=4)
    fine = run_fine_stage(small_split, SearchGrid(510.0, 790.0, 40.0, 7), cfg)
    cands = select_top_q(fine, cfg)
    res = run_coarse_stage(small_split, cands, cfg, fine)
    assert res.reached_target and res.best.test_accuracy >= 0.95
    assert len(res.best.windows) == 2
    assert res.best.windows[0] < res.best.windows[1]
    assert res.best.feature_dim <= cfg.coarse_max_dim
    assert res.featureset.windows == res.best.windows


def test_coarse_stage_single_candidate(small_split):
    one = _rec(510, 670, 0.99)
    res = run_coarse_stage(small_split, [one], SearchConfig())
    assert res.best == one and len(res.ledger) == 1
    with pytest.raises(ParameterError):
        run_coarse_stage(small_split, [_rec(510, 670, 0.5)], SearchConfig())


def test_ledger_csv_and_jsonl_round_trip(tmp_path):
    recs = [_rec(510, 530, 0.25, 5, 0.1 + 0.2),
            SearchRecord((SubbandWindow(510, 670), SubbandWindow(670, 790)),
                         (FeatureMask(5), FeatureMask(10)), 1 / 3, math.inf, 4, 7, "fcn", FLAG_DIVERGED)]
    led = SearchLedger(recs)
    led.write_csv(tmp_path / "l.csv")
    assert (tmp_path / "l.csv").read_text().splitlines()[0].startswith("windows;masks;accuracy;loss;dim;seed")
    assert SearchLedger.read_csv(tmp_path / "l.csv").records == recs
    led.write_jsonl(tmp_path / "l.jsonl")
    assert len((tmp_path / "l.jsonl").read_text().splitlines()) == 2


def test_search_data_validation(small_split):
    with pytest.raises(ParameterError):
        SearchData(small_split.train.subset(np.flatnonzero(small_split.train.labels == 0)), small_split.test)
