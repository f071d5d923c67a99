"""Fairness-audit toolkit: per-prediction sensitivity to a protected
attribute for small neural tabular classifiers, with adversarial bias
mitigation and group-fairness reporting."""

from .data import Dataset, DatasetSchema, ingest
from .metrics import GroupMetricsReport, compute_group_metrics
from .models import ModelSpec, TrainedModel, build, load, predict, save
from .sensitivity import (
    SensitivityConfig,
    SensitivityResult,
    prediction_sensitivity,
    smooth_prediction_sensitivity,
    smoothgrad_average,
)
from .tensor import Tensor, input_gradient
from .training import MitigationConfig, TrainConfig, bce_loss, train, train_mitigated

__version__ = "0.1.0"

__all__ = [
    "Dataset", "DatasetSchema", "ingest",
    "GroupMetricsReport", "compute_group_metrics",
    "ModelSpec", "TrainedModel", "build", "load", "predict", "save",
    "SensitivityConfig", "SensitivityResult", "prediction_sensitivity",
    "smooth_prediction_sensitivity", "smoothgrad_average",
    "Tensor", "input_gradient",
    "MitigationConfig", "TrainConfig", "bce_loss", "train", "train_mitigated",
    "__version__",
]
