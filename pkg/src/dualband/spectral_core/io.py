"""HSC v1 cube container and CSV spectra I/O.

HSC v1 layout::

    HSC1 <H> <W> <B> <kind>\\n
    <B whitespace-separated wavelengths in nm>\\n
    <H*W*B little-endian float32, band-sequential>
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from ..errors import LoadError
from .types import CubeKind, Hypercube, WavelengthAxis

MAGIC = "HSC1"


def _fmt(x: float) -> str:
    return repr(float(x))


def write_hsc(path, cube: Hypercube) -> None:
    path = Path(path)
    header = f"{MAGIC} {cube.height} {cube.width} {cube.bands} {cube.kind.value}\n"
    wl_line = " ".join(_fmt(w) for w in cube.axis.wavelengths_nm) + "\n"
    bsq = np.ascontiguousarray(np.moveaxis(cube.data, 2, 0), dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(wl_line.encode("ascii"))
        fh.write(bsq.tobytes())


def read_hsc(path) -> Hypercube:
    path = Path(path)
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii", errors="replace").split()
        if len(header) != 5 or header[0] != MAGIC:
            raise LoadError(f"{path}: not an HSC v1 file")
        try:
            h, w, b = (int(t) for t in header[1:4])
            kind = CubeKind(header[4])
        except ValueError as exc:
            raise LoadError(f"{path}: malformed HSC header: {exc}") from exc
        try:
            wl = np.array([float(t) for t in fh.readline().decode("ascii").split()])
        except ValueError as exc:
            raise LoadError(f"{path}: malformed wavelength line") from exc
        if wl.size != b:
            raise LoadError(f"{path}: header says {b} bands but {wl.size} wavelengths given")
        payload = fh.read()
    expected = h * w * b * 4
    if len(payload) != expected:
        raise LoadError(f"{path}: expected {expected} data bytes, found {len(payload)}")
    bsq = np.frombuffer(payload, dtype="<f4").reshape(b, h, w)
    data = np.moveaxis(bsq, 0, 2).astype(np.float32)
    return Hypercube(data, WavelengthAxis(wl), kind)


def write_axis(path, axis: WavelengthAxis) -> None:
    Path(path).write_text("\n".join(_fmt(w) for w in axis.wavelengths_nm) + "\n")


def read_axis(path) -> WavelengthAxis:
    try:
        values = [float(t) for t in Path(path).read_text().split()]
    except ValueError as exc:
        raise LoadError(f"{path}: malformed axis file") from exc
    if not values:
        raise LoadError(f"{path}: empty axis file")
    return WavelengthAxis(np.array(values))


def write_spectra_csv(path, labels, values: np.ndarray, axis: WavelengthAxis) -> None:
    """One row per instance: ``label,<v1>,<v2>,...`` under a wavelength header."""
    values = np.atleast_2d(values)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label"] + [_fmt(w) for w in axis.wavelengths_nm])
        for label, row in zip(labels, values):
            writer.writerow([label] + [_fmt(v) for v in row])


def read_spectra_csv(path) -> tuple[list[str], np.ndarray, WavelengthAxis]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise LoadError(f"{path}: empty CSV")
    head = rows[0]
    if not head or head[0].strip() != "label":
        raise LoadError(f"{path}: first column must be 'label'")
    try:
        axis = WavelengthAxis(np.array([float(t) for t in head[1:]]))
        labels = [r[0] for r in rows[1:] if r]
        values = np.array([[float(t) for t in r[1:]] for r in rows[1:] if r], dtype=np.float64)
    except ValueError as exc:
        raise LoadError(f"{path}: {exc}") from exc
    if values.size and values.shape[1] != len(axis):
        raise LoadError(f"{path}: rows have {values.shape[1]} values, header has {len(axis)}")
    return labels, values.reshape(len(labels), len(axis)), axis
