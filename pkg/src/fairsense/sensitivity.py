"""Per-prediction reliance on the protected attribute.

Plain sensitivity is the absolute partial derivative of the model's
probability output with respect to the protected feature at the example
itself. The smoothed variant is a worst-case neighborhood measure: the
maximum plain sensitivity over n Gaussian-perturbed copies of the example.
The average-case cousin (mean perturbed input gradient, the interpretability
baseline this adapts) is provided alongside.

A binary protected column is relaxed to a real-valued input here; the
derivative is taken as if the attribute were continuous. Noise is applied
to every feature including the protected one unless ``perturb_protected``
is disabled, in which case the protected column is left unperturbed.
Noise draws are a per-example stream seeded by (noise_seed, example_id),
drawn sequentially, so sample i is identical for any n >= i (nested
streams: raising n can only raise the max).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import AuditSetupError, ConfigError
from .models import TrainedModel, predict
from .rngs import substream
from .tensor import Tensor, input_gradient


@dataclass
class SensitivityConfig:
    n_samples: int = 50
    sigma: float = 0.1  # std dev, in normalized-feature units
    noise_seed: int = 0
    perturb_protected: bool = True

    def __post_init__(self):
        if self.n_samples < 1:
            raise ConfigError("n_samples must be >= 1")
        if self.sigma < 0:
            raise ConfigError("sigma must be non-negative")


@dataclass
class SensitivityResult:
    example_id: int
    prediction: float
    plain_sensitivity: float
    smooth_sensitivity: float
    per_sample_values: list[float] | None = None


def model_input_gradient(model: TrainedModel, x: np.ndarray) -> np.ndarray:
    """Exact gradient of the probability output w.r.t. every feature."""
    xt = Tensor(np.asarray(x, dtype=np.float64), requires_grad=True)
    out = model.forward(xt)
    return input_gradient(out, xt).data


def prediction_sensitivity(model: TrainedModel, x: np.ndarray,
                           attribute_index: int) -> float:
    """|d prediction / d feature[attribute_index]| at the example itself."""
    x = np.asarray(x, dtype=np.float64)
    _check_attribute(model, x, attribute_index)
    return float(abs(model_input_gradient(model, x)[attribute_index]))


def smooth_prediction_sensitivity(model: TrainedModel, x: np.ndarray,
                                  attribute_index: int,
                                  config: SensitivityConfig,
                                  example_id: int = 0,
                                  keep_samples: bool = False
                                  ) -> SensitivityResult:
    """Max plain sensitivity over n Gaussian perturbations of the example.

    The unperturbed point is audited separately (``plain_sensitivity``) and
    is not counted among the n samples.
    """
    x = np.asarray(x, dtype=np.float64)
    _check_attribute(model, x, attribute_index)
    plain = prediction_sensitivity(model, x, attribute_index)
    rng = substream(config.noise_seed, "smooth-noise", example_id)
    values = []
    for _ in range(config.n_samples):
        noise = rng.normal(0.0, config.sigma, size=x.shape)
        if not config.perturb_protected:
            noise[attribute_index] = 0.0
        grad = model_input_gradient(model, x + noise)
        values.append(float(abs(grad[attribute_index])))
    return SensitivityResult(
        example_id=example_id,
        prediction=predict(model, x),
        plain_sensitivity=plain,
        smooth_sensitivity=max(values),
        per_sample_values=values if keep_samples else None,
    )


def smoothgrad_average(model: TrainedModel, x: np.ndarray,
                       attribute_index: int,
                       config: SensitivityConfig,
                       example_id: int = 0) -> np.ndarray:
    """Mean perturbed input gradient over n samples (full signed vector).

    Uses the same noise stream as the max-based measure, so sample i is
    shared between the two.
    """
    x = np.asarray(x, dtype=np.float64)
    _check_attribute(model, x, attribute_index)
    rng = substream(config.noise_seed, "smooth-noise", example_id)
    total = np.zeros_like(x)
    for _ in range(config.n_samples):
        noise = rng.normal(0.0, config.sigma, size=x.shape)
        if not config.perturb_protected:
            noise[attribute_index] = 0.0
        total += model_input_gradient(model, x + noise)
    return total / config.n_samples


def _check_attribute(model: TrainedModel, x: np.ndarray,
                     attribute_index: int) -> None:
    if not 0 <= attribute_index < model.spec.input_dim:
        raise AuditSetupError(
            f"attribute index {attribute_index} out of range for input_dim "
            f"{model.spec.input_dim}")
    if x.shape != (model.spec.input_dim,):
        raise AuditSetupError(
            f"expected one feature vector of length {model.spec.input_dim}, "
            f"got shape {x.shape}")


def audit_dataset(model: TrainedModel, features: np.ndarray,
                  example_ids, attribute_index: int,
                  config: SensitivityConfig) -> list[SensitivityResult]:
    """Plain + smooth sensitivity for every row of a test split."""
    return [
        smooth_prediction_sensitivity(model, row, attribute_index, config,
                                      example_id=int(eid))
        for eid, row in zip(example_ids, features)
    ]


def write_audit_csv(results: list[SensitivityResult], path,
                    config: SensitivityConfig,
                    labels=None, proxy_labels: dict[int, str] | None = None
                    ) -> None:
    """Batch audit output, one row per example; floats use repr so the
    file is byte-stable across reruns."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["example-id", "prediction", "label",
                    "proxy-fairness-label", "plain-sensitivity",
                    "smooth-sensitivity", "n", "sigma", "noise-seed"])
        label_by_id = {}
        if labels is not None:
            label_by_id = {int(r.example_id): int(lab)
                           for r, lab in zip(results, labels)}
        for r in results:
            w.writerow([
                r.example_id,
                repr(r.prediction),
                label_by_id.get(r.example_id, ""),
                (proxy_labels or {}).get(r.example_id, ""),
                repr(r.plain_sensitivity),
                repr(r.smooth_sensitivity),
                config.n_samples,
                repr(config.sigma),
                config.noise_seed,
            ])
