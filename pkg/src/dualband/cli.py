"""Command-line entry point: ``dualband <command> [options]``.

Every command writes ``<command>.config.json`` into its output directory
with the effective parameters. Passing that file back through
``--config`` reproduces the run. Exit codes: 0 success, 2 usage or
parameter error (including missing input files), 3 data, shape or load
error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .classify import (
    PALETTE,
    FullSpectrumPipeline,
    SelectedFeaturePipeline,
    bench_predict,
    classify_pixels,
    evaluate,
    load_model,
    predict,
    save_model,
    train,
    write_pgm,
    write_png,
)
from .dataset_io import DatasetManifest, Split, SynthConfig, generate_cube, load_manifest, write_synthetic_dataset
from .errors import DomainError, LoadError, NumericError, ParameterError, ShapeError
from .features import DualBandFeatureSet, assemble_matrix
from .search import SearchConfig, SearchData, SearchGrid, config_dict, run_search
from .seeding import derive_seed
from .spectral_core import (
    CubeKind,
    Hypercube,
    SpectraSet,
    WavelengthAxis,
    calibrate,
    instance_mean_spectrum,
    ndvi_segment,
    preprocess_values,
    read_hsc,
    write_hsc,
    write_spectra_csv,
)

logger = logging.getLogger("dualband")

OUT_DIR_ENV = "DUALBAND_OUT_DIR"
EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
# keys that never affect results and are left out of the config echo
_NOT_ECHOED = {"command", "func", "config", "json_summary", "log_level"}


class UsageError(ParameterError):
    """Bad command-line usage, such as a missing input file."""


def _existing(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"input file not found: {path}")
    return p


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _echo_config(args, out: Path) -> Path:
    doc = {k: v for k, v in sorted(vars(args).items()) if k not in _NOT_ECHOED}
    doc = {"command": args.command, "version": __version__, "params": doc}
    path = out / f"{args.command}.config.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


# --------------------------------------------------------------------------
# shared data helpers


def _preprocess_split(manifest: DatasetManifest, use_msc: bool, use_savgol: bool,
                      window: int, order: int) -> tuple[SearchData, np.ndarray | None]:
    """Train/test spectra with MSC referenced to the training-split mean."""
    train_set = manifest.load_spectra(Split.TRAIN)
    test_set = manifest.load_spectra(Split.TEST)
    if len(train_set) == 0 or len(test_set) == 0:
        raise DomainError("manifest needs both train and test instances")
    ref = train_set.values.mean(axis=0) if use_msc else None
    kw = dict(use_msc=use_msc, msc_reference=ref, use_savgol=use_savgol, window=window, order=order)
    data = SearchData(train_set.with_values(preprocess_values(train_set.values, **kw)),
                      test_set.with_values(preprocess_values(test_set.values, **kw)))
    return data, ref


def _preprocess_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("preprocessing")
    g.add_argument("--msc", dest="msc", action=argparse.BooleanOptionalAction, default=None,
                   help="multiplicative scatter correction (default on, or as recorded in the feature set)")
    g.add_argument("--savgol", dest="savgol", action=argparse.BooleanOptionalAction, default=None,
                   help="Savitzky-Golay smoothing (default on, or as recorded in the feature set)")
    g.add_argument("--savgol-window", type=int, default=None)
    g.add_argument("--savgol-order", type=int, default=None)


def _resolve_preprocess(args, recorded: dict | None = None) -> dict:
    recorded = recorded or {}
    out = {
        "msc": recorded.get("msc", True) if args.msc is None else args.msc,
        "savgol": recorded.get("savgol", True) if args.savgol is None else args.savgol,
        "savgol_window": args.savgol_window or recorded.get("savgol_window", 11),
        "savgol_order": args.savgol_order if args.savgol_order is not None else recorded.get("savgol_order", 2),
    }
    # make the echo show what was actually used
    args.msc, args.savgol = out["msc"], out["savgol"]
    args.savgol_window, args.savgol_order = out["savgol_window"], out["savgol_order"]
    return out


def _load_data(args, recorded: dict | None = None):
    """Preprocessed split, effective preprocessing settings, manifest, MSC reference."""
    manifest = load_manifest(_existing(args.manifest))
    pp = _resolve_preprocess(args, recorded)
    data, ref = _preprocess_split(manifest, pp["msc"], pp["savgol"], pp["savgol_window"], pp["savgol_order"])
    return data, pp, manifest, ref


def _full_spectrum_set(axis: WavelengthAxis) -> str:
    return f"full-spectrum {axis.lo:g}-{axis.hi:g} nm ({len(axis)} bands)"


def _features(data: SpectraSet, fset: DualBandFeatureSet | None) -> np.ndarray:
    return data.values if fset is None else assemble_matrix(data.values, data.axis, fset)


# --------------------------------------------------------------------------
# commands


def cmd_calibrate(args) -> dict:
    raw, white, dark = (read_hsc(_existing(p)) for p in (args.raw, args.white, args.dark))
    if raw.kind is not CubeKind.RAW:
        raw = Hypercube(raw.data, raw.axis, CubeKind.RAW)
    out = _out_dir(args)
    refl = calibrate(raw, white, dark)
    path = out / args.out
    write_hsc(path, refl)
    _echo_config(args, out)
    return {"output": str(path), "shape": list(refl.shape)}


def cmd_segment(args) -> dict:
    cube = read_hsc(_existing(args.cube))
    out = _out_dir(args)
    mask = ndvi_segment(cube, args.red_nm, args.nir_nm, fruit_low_ndvi=not args.fruit_high_ndvi)
    if not mask.any():
        raise DomainError("segmentation found no fruit pixels (all background)")
    write_pgm(out / args.out_mask, mask.astype(np.uint8) * 255)
    spec = instance_mean_spectrum(cube, mask)
    write_spectra_csv(out / args.out_spectrum, [Path(args.cube).stem], spec.values[None, :], spec.axis)
    _echo_config(args, out)
    return {"fruit_pixels": int(mask.sum()), "mask": str(out / args.out_mask),
            "spectrum": str(out / args.out_spectrum)}


def cmd_search(args) -> dict:
    data, pp, manifest, ref = _load_data(args)
    grid = SearchGrid.from_span(args.span_lo, args.span_hi, args.bw)
    cfg = SearchConfig(
        q=args.q, accuracy_target=args.target, overlap_tolerance_nm=args.overlap_tol,
        classifier=args.classifier, epochs=args.epochs, batch=args.batch, lr=args.lr,
        seed=derive_seed(args.seed, "search.classifier"), knn_k=args.knn_k,
        coarse_top_masks=args.coarse_top_masks, coarse_max_dim=args.coarse_max_dim,
        coarse_block=args.coarse_block,
    )
    out = _out_dir(args)
    t0 = time.perf_counter()
    result = run_search(data, grid, cfg, jobs=args.jobs)
    elapsed = time.perf_counter() - t0
    result.fine.write_csv(out / "fine_ledger.csv")
    result.fine.write_jsonl(out / "fine_ledger.jsonl")
    result.coarse.ledger.write_csv(out / "coarse_ledger.csv")
    result.coarse.ledger.write_jsonl(out / "coarse_ledger.jsonl")
    fset = result.featureset
    if ref is not None:
        pp = dict(pp, msc_reference=[float(v) for v in ref],
                  msc_reference_axis=[float(v) for v in data.axis.wavelengths_nm])
    fset.metadata.update({"preprocess": pp, "fruit": manifest.fruit.value,
                          "class_names": list(manifest.class_names)})
    fset.save(out / "featureset.json")
    (out / "search_settings.json").write_text(json.dumps(config_dict(grid, cfg), indent=2, sort_keys=True) + "\n")
    _echo_config(args, out)
    best = result.coarse.best
    logger.info("search finished in %.1f s", elapsed)
    return {
        "fine_records": len(result.fine),
        "top_fine": result.fine.records[0].to_json(),
        "candidates": [c.to_json() for c in result.candidates],
        "coarse_records": len(result.coarse.ledger),
        "best": best.to_json(),
        "reached_target": result.coarse.reached_target,
        "featureset": str(out / "featureset.json"),
    }


def _load_fset(args) -> DualBandFeatureSet | None:
    if getattr(args, "full_spectrum", False):
        return None
    if not args.featureset:
        raise UsageError("--featureset is required unless --full-spectrum is given")
    return DualBandFeatureSet.load(_existing(args.featureset))


def cmd_train(args) -> dict:
    fset = _load_fset(args)
    recorded = fset.metadata.get("preprocess") if fset is not None else None
    data, pp, manifest, _ = _load_data(args, recorded)
    X = _features(data.train, fset)
    model = train(args.classifier, X, data.train.labels, n_classes=data.n_classes,
                  class_names=data.train.class_names, seed=derive_seed(args.seed, "train.classifier"),
                  epochs=args.epochs, batch=args.batch, lr=args.lr, C=args.C, knn_k=args.knn_k)
    out = _out_dir(args)
    path = save_model(model, out / args.out)
    meta = {"preprocess": pp, "featureset": str(fset) if fset else _full_spectrum_set(data.axis)}
    (out / (Path(args.out).stem + ".meta.json")).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    _echo_config(args, out)
    train_acc = float(np.mean(model.predict(X) == data.train.labels))
    return {"model": str(path), "classifier": args.classifier, "input_dim": int(X.shape[1]),
            "train_accuracy": train_acc}


def cmd_evaluate(args) -> dict:
    fset = _load_fset(args)
    recorded = fset.metadata.get("preprocess") if fset is not None else None
    model = load_model(_existing(Path(args.model).with_suffix(".json")))
    data, _, _, _ = _load_data(args, recorded)
    X = _features(data.test, fset)
    if X.shape[1] != model.input_dim:
        raise ShapeError(f"model expects {model.input_dim} features, data provides {X.shape[1]}")
    pred = predict(model, X)
    report = evaluate(data.test.labels, pred, data.n_classes)
    out = _out_dir(args)
    report.write_csv(out / "confusion.csv", data.test.class_names)
    report.write_summary(out / "metrics.json")
    _echo_config(args, out)
    return {"accuracy": report.accuracy, "kappa": report.kappa, "n_test": report.n,
            "confusion": str(out / "confusion.csv")}


def cmd_predict_map(args) -> dict:
    cube = read_hsc(_existing(args.cube))
    fset = DualBandFeatureSet.load(_existing(args.featureset))
    model = load_model(_existing(Path(args.model).with_suffix(".json")))
    # segment on the calibrated cube, then give fruit pixels the same
    # preprocessing as the training spectra (MSC against the recorded
    # training-split reference)
    mask = ndvi_segment(cube, args.red_nm, args.nir_nm, fruit_low_ndvi=not args.fruit_high_ndvi)
    cube = _preprocess_pixels(cube, mask, fset.metadata.get("preprocess", {}))
    class_map = classify_pixels(cube, mask, fset, model)
    out = _out_dir(args)
    path = out / args.out
    if path.suffix.lower() == ".pgm":
        write_pgm(path, class_map)
    else:
        write_png(path, class_map)
    with open(out / "palette.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "label", "r", "g", "b"])
        names = ("background",) + tuple(model.class_names)
        for i, rgb in enumerate(PALETTE[: len(names)]):
            w.writerow([i, names[i], *rgb])
    _echo_config(args, out)
    counts = np.bincount(class_map.ravel(), minlength=model.n_classes + 1)
    return {"map": str(path), "fruit_pixels": int(mask.sum()), "class_counts": counts.tolist()}


def _preprocess_pixels(cube: Hypercube, mask: np.ndarray, pp: dict) -> Hypercube:
    use_msc, use_savgol = bool(pp.get("msc")), bool(pp.get("savgol"))
    if not (use_msc or use_savgol) or not mask.any():
        return cube
    ref = None
    if use_msc:
        if "msc_reference" not in pp:
            raise LoadError("feature set enables MSC but records no MSC reference spectrum")
        ref_axis = WavelengthAxis(np.asarray(pp["msc_reference_axis"], dtype=np.float64))
        if ref_axis != cube.axis:
            raise ShapeError("cube wavelengths differ from the axis the MSC reference was built on")
        ref = np.asarray(pp["msc_reference"], dtype=np.float64)
    pixels = preprocess_values(cube.data[mask].astype(np.float64), use_msc=use_msc, msc_reference=ref,
                               use_savgol=use_savgol, window=pp.get("savgol_window", 11),
                               order=pp.get("savgol_order", 2))
    data = cube.data.copy()
    data[mask] = pixels
    return Hypercube(data, cube.axis, cube.kind)


def _bench_cubes(args) -> list[Hypercube]:
    if args.cube:
        return [read_hsc(_existing(p)) for p in args.cube]
    if args.synthetic < 1:
        raise UsageError("give --cube files or --synthetic N")
    scfg = SynthConfig(seed=derive_seed(args.seed, "bench.cubes") % (2**32))
    axis = WavelengthAxis.linspace(args.synth_lo, args.synth_hi, args.bands)
    cubes = []
    for i in range(args.synthetic):
        cube, _ = generate_cube(scfg, i % scfg.classes, (i + 3) % scfg.classes, args.height, args.width,
                                seed=scfg.seed + i, axis=axis)
        cubes.append(cube)
    return cubes


def cmd_bench(args) -> dict:
    if args.reps < 3:
        raise ParameterError(f"--reps must be >= 3, got {args.reps}")
    runs = []
    if args.model:
        if not args.featureset:
            raise UsageError("--model needs --featureset")
        fset = DualBandFeatureSet.load(_existing(args.featureset))
        runs.append((load_model(_existing(Path(args.model).with_suffix(".json"))), SelectedFeaturePipeline(fset)))
    if args.full_model:
        runs.append((load_model(_existing(Path(args.full_model).with_suffix(".json"))), FullSpectrumPipeline()))
    if not runs:
        raise UsageError("give --model and/or --full-model")
    cubes = _bench_cubes(args)
    masks = None if args.all_pixels else [ndvi_segment(c) for c in cubes]
    results = [bench_predict(m, p, cubes, args.reps, masks) for m, p in runs]
    out = _out_dir(args)
    with open(out / "bench.csv", "w", newline="") as fh:
        fields = ["method", "fps", "features_ms", "inference_ms", "total_ms"]
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in results:
            w.writerow(r.as_row())
    _echo_config(args, out)
    summary = {"results": [r.as_row() for r in results]}
    if len(results) == 2:
        summary["speedup"] = results[0].fps / results[1].fps
    return summary


def cmd_synth(args) -> dict:
    cfg = SynthConfig(n_per_class=args.n_per_class, classes=args.classes,
                      peak_shift_per_class_nm=args.shift, noise_sigma=args.noise, seed=args.seed)
    out = _out_dir(args)
    manifest = write_synthetic_dataset(out, cfg, args.test_fraction)
    summary = {"manifest": str(manifest), "planted": str(out / "planted.json")}
    if args.cube:
        cube, truth = generate_cube(cfg, 0, cfg.classes - 1, args.height, args.width)
        write_hsc(out / "cube.hsc", cube)
        write_pgm(out / "cube_truth.pgm", truth)
        summary["cube"] = str(out / "cube.hsc")
    _echo_config(args, out)
    return summary


# --------------------------------------------------------------------------
# parser


def _segment_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--red-nm", type=float, default=670.0)
    p.add_argument("--nir-nm", type=float, default=800.0)
    p.add_argument("--fruit-high-ndvi", action="store_true",
                   help="treat the high-NDVI side of the threshold as fruit")


def _classifier_flags(p: argparse.ArgumentParser, default: str) -> None:
    p.add_argument("--classifier", choices=("fcn", "svm", "knn"), default=default)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--knn-k", type=int, default=5)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out-dir", default=os.environ.get(OUT_DIR_ENV, "."),
                        help=f"output directory (default: ${OUT_DIR_ENV} or the current directory)")
    common.add_argument("--config", help="config echo file from an earlier run; its values become defaults")
    common.add_argument("--json-summary", nargs="?", const="-", default=None, metavar="PATH",
                        help="write a JSON summary to PATH, or to stdout when no path is given")
    common.add_argument("--log-level", default="WARNING")

    parser = argparse.ArgumentParser(prog="dualband", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", parents=[common], help="raw counts to reflectance")
    p.add_argument("--raw", required=True)
    p.add_argument("--white", required=True)
    p.add_argument("--dark", required=True)
    p.add_argument("--out", default="reflectance.hsc")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("segment", parents=[common], help="NDVI fruit mask and mean spectrum")
    p.add_argument("--cube", required=True)
    p.add_argument("--out-mask", default="mask.pgm")
    p.add_argument("--out-spectrum", default="spectrum.csv")
    _segment_flags(p)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("search", parents=[common], help="fine and coarse subband/feature search")
    p.add_argument("--manifest", required=True)
    p.add_argument("--span-lo", type=float, default=450.0)
    p.add_argument("--span-hi", type=float, default=850.0)
    p.add_argument("--bw", type=float, default=20.0, help="subband width in nm")
    p.add_argument("--q", type=int, default=10)
    p.add_argument("--target", type=float, default=0.95)
    p.add_argument("--overlap-tol", type=float, default=20.0)
    p.add_argument("--coarse-top-masks", type=int, default=50)
    p.add_argument("--coarse-max-dim", type=int, default=12)
    p.add_argument("--coarse-block", type=int, default=256)
    p.add_argument("--jobs", type=int, default=1)
    _classifier_flags(p, "fcn")
    _preprocess_flags(p)
    p.set_defaults(func=cmd_search)

    for name, func, help_ in (("train", cmd_train, "train a classifier"),
                              ("evaluate", cmd_evaluate, "confusion matrix, accuracy and kappa")):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.add_argument("--manifest", required=True)
        p.add_argument("--featureset")
        p.add_argument("--full-spectrum", action="store_true", help="use all bands instead of a feature set")
        if name == "train":
            _classifier_flags(p, "svm")
            p.add_argument("--C", type=float, default=1.0)
            p.add_argument("--out", default="model.json")
        else:
            p.add_argument("--model", required=True)
        _preprocess_flags(p)
        p.set_defaults(func=func)

    p = sub.add_parser("predict-map", parents=[common], help="pixel-wise class map")
    p.add_argument("--cube", required=True)
    p.add_argument("--featureset", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", default="classmap.png")
    _segment_flags(p)
    p.set_defaults(func=cmd_predict_map)

    p = sub.add_parser("bench", parents=[common], help="prediction throughput")
    p.add_argument("--model", help="selected-feature model")
    p.add_argument("--featureset")
    p.add_argument("--full-model", help="full-spectrum model")
    p.add_argument("--cube", action="append", default=[])
    p.add_argument("--synthetic", type=int, default=0, help="number of synthetic cubes")
    p.add_argument("--height", type=int, default=120)
    p.add_argument("--width", type=int, default=368)
    p.add_argument("--bands", type=int, default=400)
    p.add_argument("--synth-lo", type=float, default=450.0)
    p.add_argument("--synth-hi", type=float, default=849.0)
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--all-pixels", action="store_true", help="classify every pixel, not only fruit")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("synth", parents=[common], help="planted synthetic dataset")
    p.add_argument("--n-per-class", type=int, default=60)
    p.add_argument("--classes", type=int, default=7)
    p.add_argument("--shift", type=float, default=20.0, help="pigment peak shift per class in nm")
    p.add_argument("--noise", type=float, default=0.02)
    p.add_argument("--test-fraction", type=float, default=1 / 3)
    p.add_argument("--cube", action="store_true", help="also write a two-class demo cube")
    p.add_argument("--height", type=int, default=40)
    p.add_argument("--width", type=int, default=60)
    p.set_defaults(func=cmd_synth)
    return parser


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            doc = json.loads(_existing(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise LoadError(f"{args.config}: {exc}") from exc
        if doc.get("command") != args.command:
            raise UsageError(f"{args.config} was written by '{doc.get('command')}', not '{args.command}'")
        sub = parser._subparsers._group_actions[0].choices[args.command]
        sub.set_defaults(**doc.get("params", {}))
        args = parser.parse_args(argv)
    return args


def _emit_summary(args, summary: dict) -> None:
    text = json.dumps({"command": args.command, "status": "ok", **summary}, indent=2, sort_keys=True, default=str)
    if args.json_summary == "-":
        print(text)
    else:
        Path(args.json_summary).write_text(text + "\n")


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except SystemExit as exc:  # argparse usage errors and --help
        return int(exc.code or 0)
    except ParameterError as exc:
        print(f"dualband: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except LoadError as exc:
        print(f"dualband: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        summary = args.func(args)
    except NumericError as exc:
        print(f"dualband {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ParameterError as exc:
        print(f"dualband {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ShapeError, DomainError, LoadError) as exc:
        print(f"dualband {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    if args.json_summary:
        _emit_summary(args, summary)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
