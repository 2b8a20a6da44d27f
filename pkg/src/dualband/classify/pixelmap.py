"""Pixel-wise class maps (0 = background, 1..k = class index + 1)."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from ..errors import ParameterError, ShapeError
from ..features import DualBandFeatureSet, assemble_matrix
from ..spectral_core.types import Hypercube
from .models import Model

# index 0 is background; colours chosen to stay distinguishable in print
PALETTE = (
    (0, 0, 0),
    (34, 139, 34),
    (240, 240, 220),
    (255, 182, 193),
    (255, 105, 180),
    (220, 20, 60),
    (139, 0, 0),
    (75, 0, 130),
)


def classify_pixels(cube: Hypercube, mask: np.ndarray, fset: DualBandFeatureSet, model: Model) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (cube.height, cube.width):
        raise ShapeError(f"mask shape {mask.shape} != cube spatial shape {(cube.height, cube.width)}")
    if model.input_dim != fset.feature_dim:
        raise ShapeError(f"model expects {model.input_dim} features, feature set yields {fset.feature_dim}")
    out = np.zeros(mask.shape, dtype=np.uint8)
    if not mask.any():
        return out
    X = assemble_matrix(cube.data[mask], cube.axis, fset)
    out[mask] = model.predict(X).astype(np.uint8) + 1
    return out


def write_pgm(path, class_map: np.ndarray) -> None:
    cm = np.asarray(class_map, dtype=np.uint8)
    h, w = cm.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(cm).tobytes())


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    parts = raw.split(maxsplit=4)
    if len(parts) < 5 or parts[0] != b"P5":
        raise ParameterError(f"{path}: not a binary PGM")
    w, h = int(parts[1]), int(parts[2])
    return np.frombuffer(parts[4][: w * h], dtype=np.uint8).reshape(h, w).copy()


def write_png(path, class_map: np.ndarray) -> None:
    cm = np.asarray(class_map, dtype=np.uint8)
    if cm.size and cm.max() >= len(PALETTE):
        raise ParameterError(f"class index {int(cm.max())} exceeds the {len(PALETTE)}-colour palette")
    img = Image.fromarray(cm, mode="P")
    flat = [c for rgb in PALETTE for c in rgb]
    img.putpalette(flat + [0] * (768 - len(flat)))
    img.save(path, format="PNG", optimize=False)
