"""Dataset manifests, stratified splits and a planted-signal generator.

Manifest format (line-oriented text)::

    # fruit=strawberry axis=axis.txt
    instance_id,path,class,split
    s0001,spectra.csv#0,Green,train
    s0002,cubes/s0002.hsc,Pink,test

``path`` is relative to the manifest. ``file.csv#N`` selects data row N
(0-based) of a spectra CSV; an ``.hsc`` path is a reflectance cube whose
fruit region is found by NDVI segmentation and averaged.
"""

from __future__ import annotations

import csv
import enum
import json
import logging
import math
from collections import Counter
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import LoadError, ParameterError
from .features import SubbandWindow
from .seeding import derive_seed
from .spectral_core.io import read_axis, read_hsc, read_spectra_csv, write_axis, write_spectra_csv
from .spectral_core.segment import instance_mean_spectrum, ndvi_segment
from .spectral_core.types import CubeKind, Hypercube, SpectraSet, WavelengthAxis

logger = logging.getLogger(__name__)

MANIFEST_COLUMNS = ("instance_id", "path", "class", "split")


class Fruit(str, enum.Enum):
    STRAWBERRY = "strawberry"
    TOMATO = "tomato"
    SYNTHETIC = "synthetic"


class Split(str, enum.Enum):
    TRAIN = "train"
    TEST = "test"


CLASS_VOCAB = {
    Fruit.STRAWBERRY: ("Green", "White", "Pink", "Late-Pink", "Red", "Late-Red", "Overripe"),
    # USDA colour classes
    Fruit.TOMATO: ("Green", "Breaker", "Turning", "Pink", "Light-Red", "Red"),
}


def class_names_for(fruit: Fruit, k: int | None = None) -> tuple[str, ...]:
    fruit = Fruit(fruit)
    if fruit is Fruit.SYNTHETIC:
        if k is None:
            raise ParameterError("synthetic vocabulary needs a class count")
        return tuple(f"class_{i}" for i in range(k))
    return CLASS_VOCAB[fruit]


@dataclass(frozen=True)
class ManifestEntry:
    instance_id: str
    path: str
    class_label: str
    split: Split


@dataclass
class DatasetManifest:
    fruit: Fruit
    entries: list[ManifestEntry]
    axis: WavelengthAxis
    root: Path = Path(".")
    class_names: tuple[str, ...] = ()

    def class_counts(self, split: Split | None = None) -> dict[str, int]:
        c = Counter(e.class_label for e in self.entries if split is None or e.split is split)
        return {name: c.get(name, 0) for name in self.class_names}

    def split_sizes(self) -> dict[str, int]:
        return {s.value: sum(e.split is s for e in self.entries) for s in Split}

    def load_spectra(self, split: Split | None = None) -> SpectraSet:
        """Mean spectra for the selected entries (all entries by default)."""
        entries = [e for e in self.entries if split is None or e.split is split]
        csv_cache: dict[Path, tuple] = {}
        rows = []
        for e in entries:
            file_part, _, row_part = e.path.partition("#")
            file = self.root / file_part
            if file.suffix.lower() == ".hsc":
                cube = read_hsc(file)
                if cube.axis != self.axis:
                    raise LoadError(f"{file}: cube axis differs from manifest axis")
                mask = ndvi_segment(cube)
                rows.append(instance_mean_spectrum(cube, mask).values)
                continue
            if file not in csv_cache:
                csv_cache[file] = read_spectra_csv(file)
            _, values, axis = csv_cache[file]
            if axis != self.axis:
                raise LoadError(f"{file}: CSV wavelengths differ from manifest axis")
            row = int(row_part) if row_part else 0
            if not 0 <= row < values.shape[0]:
                raise LoadError(f"{e.path}: row {row} out of range ({values.shape[0]} rows)")
            rows.append(values[row])
        index = {name: i for i, name in enumerate(self.class_names)}
        values = np.vstack(rows) if rows else np.empty((0, len(self.axis)))
        return SpectraSet(values, [index[e.class_label] for e in entries], self.axis,
                          self.class_names, tuple(e.instance_id for e in entries))


def _parse_header(line: str) -> dict[str, str]:
    fields = {}
    for token in line.lstrip("#").split():
        key, sep, value = token.partition("=")
        if not sep:
            raise LoadError(f"malformed manifest header token {token!r}")
        fields[key.strip()] = value.strip()
    return fields


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    if not path.is_file():
        raise LoadError(f"manifest {path} does not exist")
    lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    if not lines:
        raise LoadError(f"manifest {path} is empty")
    if not lines[0].startswith("#"):
        raise LoadError(f"{path}: first line must be '# fruit=<name> axis=<file>'")
    head = _parse_header(lines[0])
    try:
        fruit = Fruit(head.get("fruit", "").lower())
    except ValueError as exc:
        raise LoadError(f"{path}: unknown fruit {head.get('fruit')!r}") from exc
    if "axis" not in head:
        raise LoadError(f"{path}: header does not name an axis file")
    axis_path = path.parent / head["axis"]
    if not axis_path.is_file():
        raise LoadError(f"{path}: axis file {axis_path} does not exist")
    axis = read_axis(axis_path)

    reader = csv.reader(lines[1:])
    columns = next(reader, None)
    if columns is None or tuple(c.strip() for c in columns) != MANIFEST_COLUMNS:
        raise LoadError(f"{path}: expected column header {','.join(MANIFEST_COLUMNS)}")
    entries: list[ManifestEntry] = []
    for lineno, row in enumerate(reader, start=3):
        if len(row) != 4:
            raise LoadError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
        iid, rel, label, split = (t.strip() for t in row)
        try:
            split_v = Split(split.lower())
        except ValueError as exc:
            raise LoadError(f"{path}:{lineno}: unknown split {split!r}") from exc
        entries.append(ManifestEntry(iid, rel, label, split_v))
    if not entries:
        raise LoadError(f"{path}: manifest lists no instances")

    if fruit is Fruit.SYNTHETIC:
        labels = sorted({e.class_label for e in entries}, key=_synthetic_key)
        vocab = class_names_for(fruit, _synthetic_key(labels[-1])[0] + 1) if labels else ()
    else:
        vocab = class_names_for(fruit)
    for e in entries:
        if e.class_label not in vocab:
            raise LoadError(f"{path}: unknown class {e.class_label!r} for {fruit.value}")
    dup_ids = [k for k, v in Counter(e.instance_id for e in entries).items() if v > 1]
    if dup_ids:
        raise LoadError(f"{path}: duplicate instance ids {dup_ids[:5]}")
    dup_paths = [k for k, v in Counter(e.path for e in entries).items() if v > 1]
    if dup_paths:
        raise LoadError(f"{path}: duplicate paths {dup_paths[:5]}")
    for e in entries:
        file = path.parent / e.path.partition("#")[0]
        if not file.is_file():
            raise LoadError(f"{path}: instance {e.instance_id} references missing file {file}")

    manifest = DatasetManifest(fruit, entries, axis, path.parent, vocab)
    logger.info("loaded %d instances (%s): %s", len(entries), manifest.split_sizes(),
                manifest.class_counts())
    return manifest


def _synthetic_key(label: str):
    prefix, _, num = label.rpartition("_")
    if prefix != "class" or not num.isdigit():
        raise LoadError(f"synthetic class labels must look like class_<n>, got {label!r}")
    return (int(num), label)


def write_manifest(path, fruit: Fruit, axis_file: str, entries: Sequence[ManifestEntry]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# fruit={Fruit(fruit).value} axis={axis_file}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_COLUMNS)
        for e in entries:
            writer.writerow([e.instance_id, e.path, e.class_label, e.split.value])


def stratified_split(labels, test_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-class proportional train/test split, as sorted index arrays.

    The overall test count is ``round(n * test_fraction)``, apportioned to
    classes by largest remainder. Classes with fewer than two instances
    go wholly to train.
    """
    labels = np.asarray(labels)
    if not 0.0 <= test_fraction < 1.0:
        raise ParameterError(f"test_fraction must be in [0, 1), got {test_fraction}")
    classes, counts = np.unique(labels, return_counts=True)
    eligible = counts >= 2
    for c in classes[~eligible]:
        logger.warning("class %s has fewer than 2 instances; placing it wholly in train", c)
    quota = np.where(eligible, counts * test_fraction, 0.0)
    base = np.floor(quota).astype(int)
    cap = np.where(eligible, counts - 1, 0)
    base = np.minimum(base, cap)
    target = min(int(math.floor(labels.size * test_fraction + 0.5)), int(cap.sum()))
    remainder = quota - base
    order = sorted(range(classes.size), key=lambda i: (-remainder[i], i))
    extra = target - int(base.sum())
    for i in order:
        if extra <= 0:
            break
        if base[i] < cap[i]:
            base[i] += 1
            extra -= 1
    rng = np.random.default_rng(derive_seed(seed, "split"))
    test = []
    for c, n_test in zip(classes, base):
        members = np.flatnonzero(labels == c)
        test.extend(members[rng.permutation(members.size)[:n_test]].tolist())
    test_idx = np.array(sorted(test), dtype=np.int64)
    train_idx = np.setdiff1d(np.arange(labels.size), test_idx)
    return train_idx, test_idx


# --------------------------------------------------------------------------
# synthetic data


@dataclass(frozen=True)
class SynthConfig:
    """Planted dual-band generator settings.

    Class ``c`` gets a Gaussian reflectance peak centred at
    ``pigment_band.lo + c * peak_shift_per_class_nm`` and a Gaussian trough
    at the chlorophyll band centre with depth
    ``trough_depth * (1 - c * trough_lift_per_class)``, on top of a smooth
    quadratic baseline of about 0.2 reflectance.
    """

    n_per_class: int = 60
    classes: int = 7
    axis_lo_nm: float = 450.0
    axis_hi_nm: float = 850.0
    axis_step_nm: float = 1.0
    pigment_band: tuple[float, float] = (510.0, 670.0)
    chlorophyll_band: tuple[float, float] = (670.0, 790.0)
    peak_shift_per_class_nm: float = 20.0
    trough_lift_per_class: float = 0.12
    noise_sigma: float = 0.02
    seed: int = 0
    peak_amplitude: float = 0.35
    peak_width_nm: float = 12.0
    trough_depth: float = 0.3
    trough_width_nm: float = 25.0
    fruit: str = "synthetic"

    @property
    def axis(self) -> WavelengthAxis:
        return WavelengthAxis.regular(self.axis_lo_nm, self.axis_hi_nm, self.axis_step_nm)

    @property
    def pigment(self) -> SubbandWindow:
        return SubbandWindow(*self.pigment_band)

    @property
    def chlorophyll(self) -> SubbandWindow:
        return SubbandWindow(*self.chlorophyll_band)

    def validate(self) -> None:
        if self.classes < 2:
            raise ParameterError("need at least two classes")
        if self.n_per_class < 1:
            raise ParameterError("n_per_class must be >= 1")
        if self.noise_sigma < 0:
            raise ParameterError("noise_sigma must be >= 0")
        if self.pigment.overlap_nm(self.chlorophyll) > 0:
            raise ParameterError("pigment and chlorophyll bands must be disjoint")
        last_peak = self.pigment_band[0] + (self.classes - 1) * self.peak_shift_per_class_nm
        if not self.pigment_band[0] <= last_peak <= self.pigment_band[1]:
            raise ParameterError(
                f"peak shift puts class {self.classes - 1} at {last_peak:g} nm, outside the pigment band"
            )
        if 1.0 - (self.classes - 1) * self.trough_lift_per_class < 0:
            raise ParameterError("trough lift makes the trough depth negative")
        axis = self.axis
        for band in (self.pigment, self.chlorophyll):
            if band.lo_nm < axis.lo or band.hi_nm > axis.hi:
                raise ParameterError(f"band {band} lies outside the axis")
        if self.fruit != Fruit.SYNTHETIC.value:
            vocab = class_names_for(Fruit(self.fruit))
            if len(vocab) != self.classes:
                raise ParameterError(f"{self.fruit} has {len(vocab)} classes, config asks for {self.classes}")

    def class_names(self) -> tuple[str, ...]:
        return class_names_for(Fruit(self.fruit), self.classes)

    def planted(self) -> dict:
        return {
            "peak_centers_nm": [self.pigment_band[0] + c * self.peak_shift_per_class_nm
                                for c in range(self.classes)],
            "trough_center_nm": 0.5 * sum(self.chlorophyll_band),
            "trough_depths": [self.trough_depth * (1.0 - c * self.trough_lift_per_class)
                              for c in range(self.classes)],
            "pigment_band": list(self.pigment_band),
            "chlorophyll_band": list(self.chlorophyll_band),
            "config": asdict(self),
        }


def baseline(wavelengths_nm: np.ndarray) -> np.ndarray:
    t = (wavelengths_nm - 650.0) / 200.0
    return 0.2 + 0.02 * t - 0.01 * t * t


def clean_spectrum(cfg: SynthConfig, c: int, wavelengths_nm: np.ndarray | None = None) -> np.ndarray:
    wl = cfg.axis.wavelengths_nm if wavelengths_nm is None else wavelengths_nm
    planted = cfg.planted()
    peak = cfg.peak_amplitude * np.exp(-0.5 * ((wl - planted["peak_centers_nm"][c]) / cfg.peak_width_nm) ** 2)
    trough = planted["trough_depths"][c] * np.exp(
        -0.5 * ((wl - planted["trough_center_nm"]) / cfg.trough_width_nm) ** 2)
    return baseline(wl) + peak - trough


def generate_synthetic(cfg: SynthConfig) -> SpectraSet:
    """Labelled spectra, ``n_per_class`` per class, classes in contiguous blocks.

    Instance ``i`` draws its noise from a generator seeded with
    ``(seed, i)`` so any instance can be regenerated on its own.
    """
    cfg.validate()
    wl = cfg.axis.wavelengths_nm
    clean = [clean_spectrum(cfg, c, wl) for c in range(cfg.classes)]
    n = cfg.classes * cfg.n_per_class
    values = np.empty((n, wl.size))
    labels = np.repeat(np.arange(cfg.classes), cfg.n_per_class)
    for i in range(n):
        rng = np.random.default_rng([cfg.seed, i])
        values[i] = clean[labels[i]] + cfg.noise_sigma * rng.standard_normal(wl.size)
    ids = tuple(f"syn{i:05d}" for i in range(n))
    return SpectraSet(values, labels, cfg.axis, cfg.class_names(), ids)


def vegetation_spectrum(wavelengths_nm: np.ndarray) -> np.ndarray:
    """Leaf-like reflectance: green bump, red absorption, NIR plateau."""
    wl = wavelengths_nm
    green = 0.06 * np.exp(-0.5 * ((wl - 550.0) / 25.0) ** 2)
    red_edge = 0.45 / (1.0 + np.exp(-(wl - 715.0) / 12.0))
    return 0.04 + green + red_edge


def generate_cube(cfg: SynthConfig, class_left: int, class_right: int, height: int = 40,
                  width: int = 60, margin: int | None = None, seed: int | None = None,
                  axis: WavelengthAxis | None = None) -> tuple[Hypercube, np.ndarray]:
    """Reflectance cube with a two-class fruit region on a vegetation background.

    Returns the cube and the ground-truth class map (0 = background,
    ``c + 1`` for class ``c``). The fruit occupies the rectangle inside a
    ``margin``-pixel border; its left half is ``class_left`` and its right
    half ``class_right``.
    """
    cfg.validate()
    for c in (class_left, class_right):
        if not 0 <= c < cfg.classes:
            raise ParameterError(f"class {c} out of range")
    axis = cfg.axis if axis is None else axis
    wl = axis.wavelengths_nm
    margin = max(1, min(height, width) // 8) if margin is None else margin
    truth = np.zeros((height, width), dtype=np.uint8)
    mid = width // 2
    truth[margin:height - margin, margin:mid] = class_left + 1
    truth[margin:height - margin, mid:width - margin] = class_right + 1
    rng = np.random.default_rng([cfg.seed if seed is None else seed, height, width])
    palette = np.vstack([vegetation_spectrum(wl)] + [clean_spectrum(cfg, c, wl) for c in range(cfg.classes)])
    data = palette[truth.astype(np.int64)].astype(np.float32)
    if cfg.noise_sigma > 0:
        for b in range(wl.size):
            data[:, :, b] += (cfg.noise_sigma * rng.standard_normal((height, width))).astype(np.float32)
    return Hypercube(data, axis, CubeKind.REFLECTANCE), truth


def write_synthetic_dataset(out_dir, cfg: SynthConfig, test_fraction: float = 1 / 3,
                            split_seed: int | None = None) -> Path:
    """Write ``spectra.csv``, ``axis.txt``, ``manifest.csv`` and ``planted.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data = generate_synthetic(cfg)
    train_idx, test_idx = stratified_split(data.labels, test_fraction,
                                           cfg.seed if split_seed is None else split_seed)
    test_set = set(test_idx.tolist())
    names = [data.class_names[c] for c in data.labels]
    write_spectra_csv(out / "spectra.csv", names, data.values, data.axis)
    write_axis(out / "axis.txt", data.axis)
    entries = [
        ManifestEntry(data.ids[i], f"spectra.csv#{i}", names[i],
                      Split.TEST if i in test_set else Split.TRAIN)
        for i in range(len(data))
    ]
    write_manifest(out / "manifest.csv", Fruit(cfg.fruit), "axis.txt", entries)
    planted = cfg.planted()
    planted["split"] = {"train": int(train_idx.size), "test": int(test_idx.size),
                        "test_fraction": test_fraction}
    (out / "planted.json").write_text(json.dumps(planted, indent=2, sort_keys=True) + "\n")
    return out / "manifest.csv"
