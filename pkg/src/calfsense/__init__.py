"""Software stack for a 16-channel calf pressure-sensor array: wire-format
acquisition, normalization, windowed features, PCA + SVM motion recognition,
health analyses and a device simulator with known ground truth."""

from .core import MotionLabel, NormalizedSeries, SensorFrame, Session, estimate_baseline, normalize
from .features import featurize, featurize_batch
from .health import EventParams, chair_stand_count, gait_analyze, tandem_analyze
from .pca import fit_pca, pca_transform
from .svm import KernelSpec, TrainConfig, train_binary, train_multiclass
from .windowing import WindowSpec, segment

__version__ = "0.1.0"

__all__ = [
    "EventParams",
    "KernelSpec",
    "MotionLabel",
    "NormalizedSeries",
    "SensorFrame",
    "Session",
    "TrainConfig",
    "WindowSpec",
    "chair_stand_count",
    "estimate_baseline",
    "featurize",
    "featurize_batch",
    "fit_pca",
    "gait_analyze",
    "normalize",
    "pca_transform",
    "segment",
    "tandem_analyze",
    "train_binary",
    "train_multiclass",
]
