"""Acceptance suite: one test per criterion, each recording a pass/fail line."""

from __future__ import annotations

import hashlib
import math
import os
import time
from pathlib import Path

import numpy as np
import pytest

from dualband.classify import (
    FullSpectrumPipeline,
    SelectedFeaturePipeline,
    bench_predict,
    evaluate,
    kappa_from_confusion,
    train,
)
from dualband.classify.fcn import cross_entropy, forward, init_params, loss_and_grads, softmax
from dualband.cli import _preprocess_split, main
from dualband.dataset_io import SynthConfig, generate_cube, generate_synthetic, load_manifest, stratified_split
from dualband.features import (
    DualBandFeatureSet,
    FeatureMask,
    SubbandWindow,
    assemble_matrix,
    window_features,
)
from dualband.search import SearchGrid, SearchLedger, enumerate_masks, enumerate_windows
from dualband.spectral_core import CubeKind, Hypercube, WavelengthAxis, calibrate, msc, ndvi_segment, savgol

JOBS = min(8, os.cpu_count() or 1)
PIGMENT = SubbandWindow(510, 670)


def _sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def planted_search(tmp_path_factory):
    """Full default-grid search on the planted 7-class set with the fast classifier."""
    root = tmp_path_factory.mktemp("planted")
    assert main(["synth", "--out-dir", str(root / "data")]) == 0
    t0 = time.perf_counter()
    rc = main(["search", "--manifest", str(root / "data" / "manifest.csv"), "--classifier", "knn",
               "--jobs", str(JOBS), "--out-dir", str(root / "search")])
    elapsed = time.perf_counter() - t0
    assert rc == 0
    fine = SearchLedger.read_csv(root / "search" / "fine_ledger.csv")
    coarse = SearchLedger.read_csv(root / "search" / "coarse_ledger.csv", "coarse")
    return fine, coarse, elapsed


def test_criterion_1_enumeration(acceptance, planted_search):
    t0 = time.perf_counter()
    windows = enumerate_windows(SearchGrid())
    masks = enumerate_masks()
    n_candidates = sum(1 for _ in windows for _ in masks)
    elapsed = time.perf_counter() - t0
    fine, _, _ = planted_search
    ok = len(windows) == 210 and len(masks) == 511 and n_candidates == 107_310 \
        and len(fine) == 107_310 and elapsed < 1.0
    acceptance(1, ok, f"{len(windows)} windows x {len(masks)} masks = {n_candidates}; "
                      f"ledger {len(fine)} records; enumeration {elapsed * 1e3:.1f} ms")
    assert ok


def test_criterion_2_planted_band_recovery(acceptance, planted_search):
    fine, coarse, elapsed = planted_search
    top = fine.records[0]
    w = top.windows[0]
    overlap = w.overlap_nm(PIGMENT) / PIGMENT.width_nm
    has_argmax = "argmax" in top.masks[0].names
    best = coarse.records[0]
    ok = has_argmax and overlap >= 0.5 and best.test_accuracy >= 0.95 and elapsed <= 1800
    acceptance(2, ok, f"top fine {{{top.masks[0]}}}@{w} covers {overlap:.0%} of {PIGMENT}; "
                      f"coarse best {best.test_accuracy:.4f} with "
                      f"{' + '.join(f'{{{m}}}@{x}' for x, m in zip(best.windows, best.masks))}; "
                      f"search {elapsed:.0f} s at jobs={JOBS}")
    assert ok


def test_criterion_3_single_feature_ranking(acceptance, planted_search):
    fine, _, _ = planted_search
    rank = {}
    acc = {}
    for i, r in enumerate(fine.records):
        if r.windows == (PIGMENT,) and r.feature_dim == 1:
            name = r.masks[0].names[0]
            rank[name], acc[name] = i, r.test_accuracy
    others = ("mean", "median", "area", "skewness", "kurtosis")
    ok = all(rank["argmax"] < rank[o] and acc["argmax"] > acc[o] for o in others)
    acceptance(3, ok, ", ".join(f"{n}={acc[n]:.3f}" for n in ("argmax",) + others))
    assert ok


REAL_SETS = {
    "strawberry": ("DUALBAND_STRAWBERRY_MANIFEST",
                   ((510, 670, "max+argmax"), (670, 790, "min+argmin")), 0.96, 0.95),
    "tomato": ("DUALBAND_TOMATO_MANIFEST",
               ((510, 650, "argmax+argmin"), (650, 770, "max+min+argmax+argmin")), 0.94, 0.93),
}


@pytest.mark.parametrize("fruit", sorted(REAL_SETS))
def test_criterion_4_real_data(acceptance, fruit):
    env, parts, min_acc, min_kappa = REAL_SETS[fruit]
    path = os.environ.get(env)
    if not path or not Path(path).is_file():
        acceptance(4, False, f"{fruit}: public dataset not available, set {env}", skipped=True)
        pytest.skip(f"{env} not set; real {fruit} data unavailable")
    manifest = load_manifest(path)
    data, _ = _preprocess_split(manifest, True, True, 11, 2)
    fset = DualBandFeatureSet(tuple(SubbandWindow(lo, hi) for lo, hi, _ in parts),
                              tuple(FeatureMask.parse(m) for _, _, m in parts))
    model = train("svm", assemble_matrix(data.train.values, data.axis, fset), data.train.labels,
                  n_classes=data.n_classes)
    pred = model.predict(assemble_matrix(data.test.values, data.axis, fset))
    rep = evaluate(data.test.labels, pred, data.n_classes)
    ok = rep.accuracy >= min_acc and rep.kappa >= min_kappa
    acceptance(4, ok, f"{fruit}: accuracy {rep.accuracy:.4f} (>= {min_acc}), kappa {rep.kappa:.4f} (>= {min_kappa})")
    assert ok


def _brute_features(x, wl_nm):
    x = [float(v) for v in x]
    wl = [w / 1000.0 for w in wl_nm]
    n = len(x)
    mean = math.fsum(x) / n
    s = sorted(x)
    med = s[n // 2] if n % 2 else 0.5 * (s[n // 2 - 1] + s[n // 2])
    m2 = math.fsum((v - mean) ** 2 for v in x) / n
    m3 = math.fsum((v - mean) ** 3 for v in x) / n
    m4 = math.fsum((v - mean) ** 4 for v in x) / n
    area = math.fsum(0.5 * (x[i] + x[i + 1]) * (wl[i + 1] - wl[i]) for i in range(n - 1))
    return [max(x), min(x), wl[x.index(max(x))], wl[x.index(min(x))], mean, med, area,
            m3 / m2 ** 1.5, m4 / m2 ** 2]


def test_criterion_5_numerical_properties(acceptance):
    t0 = time.perf_counter()
    r = np.random.default_rng(2024)
    checks = {}

    dark = r.uniform(0, 10, (5, 6, 20))
    white = dark + r.uniform(50, 100, (5, 6, 20))
    axis = WavelengthAxis.linspace(500, 900, 20)
    W, D = (Hypercube(a, axis, CubeKind.RAW) for a in (white, dark))
    checks["calibration"] = bool(np.all(calibrate(Hypercube(white, axis, CubeKind.RAW), W, D).data == 1.0)
                                 and np.all(calibrate(Hypercube(dark, axis, CubeKind.RAW), W, D).data == 0.0))

    X = r.uniform(0.5, 2, (20, 1)) * (np.sin(np.linspace(0, 4, 100)) + 2) + r.uniform(-0.2, 0.2, (20, 1))
    ref = X.mean(axis=0)
    once = msc(X, ref)
    checks["msc_idempotence"] = float(np.max(np.abs(msc(once, ref) - once))) <= 1e-9

    t = np.linspace(-1, 1, 200)
    sg_err = max(float(np.max(np.abs(savgol(np.polyval(c, t))[5:-5] - np.polyval(c, t)[5:-5])))
                 for c in r.uniform(-3, 3, (20, 3)))
    checks["savgol_polynomial"] = sg_err <= 1e-9

    weights, biases = init_params([2, 3, 2], r)
    biases = [b + 0.2 for b in biases]
    Xg, yg = r.standard_normal((8, 2)), r.integers(0, 2, 8)
    _, gw, gb = loss_and_grads(weights, biases, Xg, yg)
    worst = 0.0
    for params, grads in ((weights, gw), (biases, gb)):
        for P, G in zip(params, grads):
            for idx in np.ndindex(P.shape):
                old = P[idx]
                P[idx] = old + 1e-6
                up = cross_entropy(forward(weights, biases, Xg)[-1], yg)
                P[idx] = old - 1e-6
                down = cross_entropy(forward(weights, biases, Xg)[-1], yg)
                P[idx] = old
                num = (up - down) / 2e-6
                worst = max(worst, abs(num - G[idx]) / max(1e-8, abs(num) + abs(G[idx])))
    checks["fcn_gradient"] = worst <= 1e-4

    p = softmax(r.normal(0, 20, (500, 7)))
    checks["softmax"] = float(np.max(np.abs(p.sum(axis=1) - 1))) <= 1e-6

    kappa_err = 0.0
    for _ in range(100):
        k = int(r.integers(2, 8))
        cm = r.integers(0, 40, (k, k)).astype(float)
        cm[0, 0] += 1
        n = cm.sum()
        po, pe = np.trace(cm) / n, float(cm.sum(0) @ cm.sum(1)) / n ** 2
        kappa_err = max(kappa_err, abs(kappa_from_confusion(cm) - (po - pe) / (1 - pe)))
    checks["kappa"] = kappa_err <= 1e-12

    feat_err = 0.0
    for _ in range(1000):
        b = int(r.integers(3, 50))
        wl = np.sort(r.uniform(450, 850, b))
        wl = wl + np.arange(b) * 1e-3  # strictly increasing
        x = r.uniform(0, 1, b)
        got = window_features(x[None, :], wl)[0]
        feat_err = max(feat_err, float(np.max(np.abs(got - np.array(_brute_features(x, wl))))))
    checks["features_oracle"] = feat_err <= 1e-9

    elapsed = time.perf_counter() - t0
    ok = all(checks.values()) and elapsed < 60
    acceptance(5, ok, ", ".join(f"{k}={'ok' if v else 'FAIL'}" for k, v in checks.items())
               + f"; {elapsed:.1f} s")
    assert ok


def test_criterion_6_throughput_ratio(acceptance):
    cfg = SynthConfig(axis_hi_nm=849.0)  # 400 bands at 1 nm
    data = generate_synthetic(cfg)
    tr, _ = stratified_split(data.labels, 1 / 3, 0)
    train_set = data.subset(tr)
    fset = DualBandFeatureSet((SubbandWindow(510, 670), SubbandWindow(670, 790)),
                              (FeatureMask.parse("max+argmax"), FeatureMask.parse("min+argmin")))
    selected = train("svm", assemble_matrix(train_set.values, train_set.axis, fset), train_set.labels,
                     n_classes=cfg.classes)
    full = train("svm", train_set.values, train_set.labels, n_classes=cfg.classes)
    cubes = [generate_cube(cfg, i, (i + 3) % cfg.classes, 120, 368, seed=i)[0] for i in range(3)]
    assert cubes[0].shape == (120, 368, 400)
    masks = [ndvi_segment(c) for c in cubes]
    sel = bench_predict(selected, SelectedFeaturePipeline(fset), cubes, 5, masks)
    ful = bench_predict(full, FullSpectrumPipeline(), cubes, 5, masks)
    ratio = sel.fps / ful.fps
    ok = ratio >= 5.0
    acceptance(6, ok, f"selected-feature SVM {sel.fps:.2f} FPS vs full-spectrum SVM {ful.fps:.2f} FPS, "
                      f"ratio {ratio:.2f} (SVs {selected.support_vectors.shape[0]} vs {full.support_vectors.shape[0]})")
    assert ok


def test_criterion_7_determinism(acceptance, tmp_path):
    assert main(["synth", "--out-dir", str(tmp_path / "data"), "--seed", "5"]) == 0
    manifest = str(tmp_path / "data" / "manifest.csv")
    grid = ["--span-lo", "510", "--span-hi", "750", "--bw", "40", "--seed", "5"]
    runs = {"knn-a": ["--classifier", "knn", "--jobs", "1"],
            "knn-b": ["--classifier", "knn", "--jobs", "1"],
            "knn-j8": ["--classifier", "knn", "--jobs", "8"],
            "fcn-j1": ["--classifier", "fcn", "--epochs", "2", "--span-hi", "590", "--jobs", "1"],
            "fcn-j8": ["--classifier", "fcn", "--epochs", "2", "--span-hi", "590", "--jobs", "8"]}
    for name, flags in runs.items():
        assert main(["search", "--manifest", manifest, "--out-dir", str(tmp_path / name)] + grid + flags) == 0

    def digest(name):
        return [_sha(tmp_path / name / f) for f in ("fine_ledger.csv", "coarse_ledger.csv", "featureset.json")]

    def canonical(name):
        return [SearchLedger.read_csv(tmp_path / name / f).sorted().records
                for f in ("fine_ledger.csv", "coarse_ledger.csv")]

    same_seed = digest("knn-a") == digest("knn-b")
    jobs_knn = canonical("knn-a") == canonical("knn-j8")
    jobs_fcn = canonical("fcn-j1") == canonical("fcn-j8")
    ok = same_seed and jobs_knn and jobs_fcn
    acceptance(7, ok, f"rerun byte-identical={same_seed}; jobs 1 vs 8 identical: knn={jobs_knn}, fcn={jobs_fcn}")
    assert ok
