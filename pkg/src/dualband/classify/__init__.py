"""Classifiers, metrics, pixel maps and throughput benchmarks."""

from .bench import BenchResult, FullSpectrumPipeline, SelectedFeaturePipeline, bench_predict
from .fcn import FcnConfig, FcnModel, train_fcn
from .knn import KnnConfig, KnnModel, train_knn
from .metrics import EvalReport, confusion_matrix, evaluate, kappa_from_confusion
from .models import (
    ClassifierKind,
    class_probabilities,
    kind_of,
    load_model,
    mean_log_loss,
    predict,
    save_model,
    train,
)
from .pixelmap import PALETTE, classify_pixels, read_pgm, write_pgm, write_png
from .standardize import Standardizer
from .svm import SvmConfig, SvmModel, train_svm

__all__ = [
    "PALETTE",
    "BenchResult",
    "ClassifierKind",
    "EvalReport",
    "FcnConfig",
    "FcnModel",
    "FullSpectrumPipeline",
    "KnnConfig",
    "KnnModel",
    "SelectedFeaturePipeline",
    "Standardizer",
    "SvmConfig",
    "SvmModel",
    "bench_predict",
    "class_probabilities",
    "classify_pixels",
    "confusion_matrix",
    "evaluate",
    "kappa_from_confusion",
    "kind_of",
    "load_model",
    "mean_log_loss",
    "predict",
    "read_pgm",
    "save_model",
    "train",
    "train_fcn",
    "train_knn",
    "train_svm",
    "write_pgm",
    "write_png",
]
