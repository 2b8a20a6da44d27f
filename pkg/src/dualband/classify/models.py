"""Classifier dispatch, prediction and on-disk model format.

A saved model is two files: ``<stem>.json`` (format/version, kind,
hyper-parameters, class names) and ``<stem>.npz`` with the arrays.
"""

from __future__ import annotations

import enum
import io
import json
import zipfile
from pathlib import Path

import numpy as np

from ..errors import LoadError, ParameterError
from .fcn import FcnConfig, FcnModel, train_fcn
from .knn import KnnConfig, KnnModel, train_knn
from .standardize import Standardizer
from .svm import SvmConfig, SvmModel, train_svm

MODEL_FORMAT = "dualband-model"
MODEL_VERSION = 1


class ClassifierKind(str, enum.Enum):
    FCN = "fcn"
    SVM = "svm"
    KNN = "knn"


Model = FcnModel | SvmModel | KnnModel


def kind_of(model: Model) -> ClassifierKind:
    if isinstance(model, FcnModel):
        return ClassifierKind.FCN
    if isinstance(model, SvmModel):
        return ClassifierKind.SVM
    if isinstance(model, KnnModel):
        return ClassifierKind.KNN
    raise ParameterError(f"unsupported model type {type(model).__name__}")


def train(kind, X, y, *, n_classes=None, class_names=(), seed=0, epochs=100, batch=32,
          lr=1e-3, C=1.0, degree=3, gamma=None, coef0=1.0, knn_k=5) -> Model:
    kind = ClassifierKind(kind)
    if kind is ClassifierKind.FCN:
        return train_fcn(X, y, FcnConfig(epochs=epochs, batch=batch, lr=lr, seed=seed),
                         n_classes, class_names)
    if kind is ClassifierKind.SVM:
        return train_svm(X, y, SvmConfig(C=C, degree=degree, gamma=gamma, coef0=coef0, seed=seed),
                         n_classes, class_names)
    return train_knn(X, y, KnnConfig(k=knn_k, seed=seed), n_classes, class_names)


def predict(model: Model, X, return_proba: bool = False):
    """Predicted class indices; with ``return_proba`` also class probabilities.

    Only the FCN produces calibrated-in-form softmax probabilities; for the
    SVM and k-NN the returned rows are add-one smoothed vote shares.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if not return_proba:
        return model.predict(X)
    proba = class_probabilities(model, X)
    return model.predict(X), proba


def class_probabilities(model: Model, X) -> np.ndarray:
    if isinstance(model, SvmModel):
        votes = model.votes(X).astype(np.float64)
        return (votes + 1.0) / (len(model.pairs) + model.n_classes)
    return model.predict_proba(X)


def mean_log_loss(proba: np.ndarray, y) -> float:
    y = np.asarray(y, dtype=np.int64)
    p = np.clip(proba[np.arange(y.size), y], 1e-300, None)
    return float(-np.log(p).mean())


def save_model(model: Model, path) -> Path:
    path = Path(path)
    stem = path.with_suffix("")
    kind = kind_of(model)
    header = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "kind": kind.value,
        "class_names": list(model.class_names),
        "input_dim": int(model.input_dim),
    }
    arrays = {"std_mean": model.standardizer.mean, "std_std": model.standardizer.std}
    if kind is ClassifierKind.FCN:
        header["layer_dims"] = model.layer_dims
        for i, (W, b) in enumerate(zip(model.weights, model.biases)):
            arrays[f"W{i}"] = W
            arrays[f"b{i}"] = b
    elif kind is ClassifierKind.SVM:
        header.update(gamma=model.gamma, coef0=model.coef0, degree=model.degree, C=model.C,
                      pairs=[list(p) for p in model.pairs])
        arrays.update(support_vectors=model.support_vectors, dual_coef=model.dual_coef, rho=model.rho)
    else:
        header["k"] = model.k
        arrays.update(train_z=model.train_z, train_y=model.train_y)
    json_path = stem.with_suffix(".json")
    json_path.write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")
    write_npz(stem.with_suffix(".npz"), arrays)
    return json_path


def write_npz(path, arrays: dict) -> None:
    """Like ``np.savez`` but with fixed zip timestamps, so output is byte-stable."""
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for name in sorted(arrays):
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.asarray(arrays[name]), allow_pickle=False)
            info = zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0))
            zf.writestr(info, buf.getvalue())


def load_model(path) -> Model:
    stem = Path(path).with_suffix("")
    try:
        header = json.loads(stem.with_suffix(".json").read_text())
        arrays = dict(np.load(stem.with_suffix(".npz")))
    except (OSError, json.JSONDecodeError, ValueError) as exc:
        raise LoadError(f"cannot read model {stem}: {exc}") from exc
    if header.get("format") != MODEL_FORMAT:
        raise LoadError(f"{stem}.json is not a {MODEL_FORMAT} file")
    if header.get("version") != MODEL_VERSION:
        raise LoadError(f"unsupported model version {header.get('version')}")
    std = Standardizer(arrays["std_mean"], arrays["std_std"])
    names = tuple(header["class_names"])
    kind = ClassifierKind(header["kind"])
    if kind is ClassifierKind.FCN:
        n = len(header["layer_dims"]) - 1
        return FcnModel([arrays[f"W{i}"] for i in range(n)], [arrays[f"b{i}"] for i in range(n)], std, names)
    if kind is ClassifierKind.SVM:
        return SvmModel(arrays["support_vectors"], arrays["dual_coef"], arrays["rho"],
                        [tuple(p) for p in header["pairs"]], header["gamma"], header["coef0"],
                        header["degree"], header["C"], std, names)
    return KnnModel(arrays["train_z"], arrays["train_y"], header["k"], std, names)
