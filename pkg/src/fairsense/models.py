"""The two classifier architectures, their adversaries, and persistence.

Both classifiers end in a sigmoid and emit one probability. The linear
network is 3 hidden layers of 32 ReLU units with dropout 0.2 on each
hidden layer; the conv network is a stack of six 1D convolutions with
filter counts 256-128-64-32-16-1 over the feature vector treated as a
one-channel sequence, reduced to a scalar by global average pooling.

An adversary derived from either architecture keeps the hidden structure,
drops all dropout, and widens the output to the protected-attribute count.

Kernel size 3, stride 1 and zero padding 1 keep conv maps length-preserving;
the scalar head (global average pooling after the final 1-filter conv) and
the kernel geometry are our choices, not dictated by the architectures'
shorthand, and are recorded here so audits can cite them.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as T
from .errors import (
    CorruptFileError,
    DimensionError,
    ShapeMismatchError,
    SpecError,
    VersionError,
)
from .rngs import substream
from .tensor import Tensor

MODEL_FORMAT_VERSION = 1

HIDDEN_UNITS = 32
HIDDEN_LAYERS = 3
DROPOUT_P = 0.2
CONV_FILTERS = (256, 128, 64, 32, 16)
CONV_KERNEL = 3


@dataclass(frozen=True)
class ModelSpec:
    kind: str  # "linear" or "conv"
    input_dim: int
    adversary: bool = False
    protected_attr_count: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("linear", "conv"):
            raise SpecError(f"unknown model kind {self.kind!r}")
        if self.input_dim < 2 and not self.adversary:
            raise SpecError(
                "input_dim must be >= 2 (protected attribute plus at least "
                "one other feature)")
        if self.input_dim < 1:
            raise SpecError("input_dim must be positive")
        if self.protected_attr_count < 1:
            raise SpecError("protected_attr_count must be positive")

    @property
    def output_width(self) -> int:
        return self.protected_attr_count if self.adversary else 1

    @property
    def dropout_p(self) -> float:
        # dropout lives on the linear net's hidden layers only; adversaries
        # have all dropout removed
        if self.adversary or self.kind == "conv":
            return 0.0
        return DROPOUT_P

    def adversary_of(self, protected_attr_count: int = 1,
                     seed: int | None = None) -> "ModelSpec":
        """Adversary spec: same hidden structure, fed the model's scalar output."""
        return ModelSpec(kind=self.kind, input_dim=1, adversary=True,
                         protected_attr_count=protected_attr_count,
                         seed=self.seed + 1 if seed is None else seed)


def expected_shapes(spec: ModelSpec) -> list[tuple[str, tuple[int, ...]]]:
    """Weight names and shapes fully determined by the spec."""
    shapes: list[tuple[str, tuple[int, ...]]] = []
    if spec.kind == "linear":
        fan_in = spec.input_dim
        for i in range(HIDDEN_LAYERS):
            shapes.append((f"hidden{i + 1}.weight", (fan_in, HIDDEN_UNITS)))
            shapes.append((f"hidden{i + 1}.bias", (HIDDEN_UNITS,)))
            fan_in = HIDDEN_UNITS
        shapes.append(("output.weight", (fan_in, spec.output_width)))
        shapes.append(("output.bias", (spec.output_width,)))
    else:
        in_ch = 1
        for i, out_ch in enumerate(CONV_FILTERS + (spec.output_width,)):
            shapes.append((f"conv{i + 1}.kernel", (out_ch, in_ch, CONV_KERNEL)))
            in_ch = out_ch
    return shapes


def parameter_count(spec: ModelSpec) -> int:
    return sum(int(np.prod(s)) for _, s in expected_shapes(spec))


class TrainedModel:
    """Architecture spec plus an ordered, named weight store."""

    def __init__(self, spec: ModelSpec, weights: list[tuple[str, Tensor]],
                 training_meta: dict | None = None):
        self.spec = spec
        self.weights = weights
        self.training_meta = training_meta or {
            "epochs": 0, "final_loss": None, "mitigation": False,
            "seed": spec.seed,
        }
        for (name, want), (got_name, w) in zip(expected_shapes(spec), weights):
            if got_name != name or w.shape != want:
                raise ShapeMismatchError(
                    f"weight {got_name!r} has shape {w.shape}, expected "
                    f"{name!r} with shape {want}")
        if len(weights) != len(expected_shapes(spec)):
            raise ShapeMismatchError(
                f"expected {len(expected_shapes(spec))} weights, got "
                f"{len(weights)}")

    def parameters(self) -> list[Tensor]:
        return [w for _, w in self.weights]

    def zero_grad(self) -> None:
        for w in self.parameters():
            w.zero_grad()

    def forward(self, x: Tensor, training: bool = False,
                dropout_rng: np.random.Generator | None = None) -> Tensor:
        """Probability output: shape () for one example, (B,) for a batch.

        Adversaries with protected_attr_count > 1 return that many
        probabilities per example instead of one.
        """
        if x.shape[-1] != self.spec.input_dim:
            raise DimensionError(
                f"input has {x.shape[-1]} features, model expects "
                f"{self.spec.input_dim}")
        if self.spec.kind == "linear":
            out = self._forward_linear(x, training, dropout_rng)
        else:
            out = self._forward_conv(x)
        if self.spec.output_width == 1:
            out = T.reshape(out, x.shape[:-1])
        return out

    def _forward_linear(self, x, training, dropout_rng):
        params = dict(self.weights)
        h = x
        for i in range(HIDDEN_LAYERS):
            h = T.relu(T.add(T.matmul(h, params[f"hidden{i + 1}.weight"]),
                             params[f"hidden{i + 1}.bias"]))
            h = T.dropout(h, self.spec.dropout_p, dropout_rng, training)
        z = T.add(T.matmul(h, params["output.weight"]), params["output.bias"])
        return T.sigmoid(z)

    def _forward_conv(self, x):
        if len(x.shape) != 1:
            raise DimensionError(
                f"conv model takes one example at a time, got shape {x.shape}")
        h = T.reshape(x, (1, x.shape[0]))
        kernels = [w for _, w in self.weights]
        for k in kernels[:-1]:
            h = T.relu(T.conv1d(h, k))
        h = T.conv1d(h, kernels[-1])
        return T.sigmoid(T.global_average_pool(h))


def build(spec: ModelSpec) -> TrainedModel:
    """Untrained model with seeded uniform(+-sqrt(1/fan_in)) weights."""
    rng = substream(spec.seed, "init")
    weights = []
    for name, shape in expected_shapes(spec):
        if len(shape) == 3:
            fan_in = shape[1] * shape[2]
        elif len(shape) == 2:
            fan_in = shape[0]
        else:
            fan_in = _fan_in_for_bias(spec, name)
        bound = float(np.sqrt(1.0 / fan_in))
        data = rng.uniform(-bound, bound, size=shape)
        weights.append((name, Tensor(data, requires_grad=True)))
    return TrainedModel(spec, weights)


def _fan_in_for_bias(spec: ModelSpec, name: str) -> int:
    layer = name.split(".")[0]
    if layer == "hidden1":
        return spec.input_dim
    return HIDDEN_UNITS


def predict(model: TrainedModel, x: np.ndarray) -> float:
    """Deterministic probability for one feature vector, dropout disabled."""
    out = model.forward(Tensor(np.asarray(x, dtype=np.float64)))
    return out.item()


def predict_batch(model: TrainedModel, xs: np.ndarray) -> np.ndarray:
    xs = np.asarray(xs, dtype=np.float64)
    if model.spec.kind == "linear":
        return model.forward(Tensor(xs)).data.copy()
    return np.array([predict(model, row) for row in xs])


# ---------------------------------------------------------------------------
# persistence: versioned, canonical, diffable text format


def _canonical_json(doc: dict) -> str:
    # sort_keys + fixed separators + repr floats => byte-stable files
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def save(model: TrainedModel, path) -> None:
    doc = {
        "format-version": MODEL_FORMAT_VERSION,
        "spec": asdict(model.spec),
        "training-meta": model.training_meta,
        "weights": [
            {"name": name, "shape": list(w.shape),
             "values": w.data.reshape(-1).tolist()}
            for name, w in model.weights
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_canonical_json(doc))


def load(path) -> TrainedModel:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorruptFileError(f"{path}: not a valid model file: {exc}") from exc
    if not isinstance(doc, dict) or "format-version" not in doc:
        raise CorruptFileError(f"{path}: missing format-version header")
    if doc["format-version"] != MODEL_FORMAT_VERSION:
        raise VersionError(
            f"{path}: unknown format version {doc['format-version']!r}")
    try:
        spec = ModelSpec(**doc["spec"])
        records = doc["weights"]
    except (KeyError, TypeError) as exc:
        raise CorruptFileError(f"{path}: malformed model document") from exc
    expected = expected_shapes(spec)
    if len(records) != len(expected):
        raise ShapeMismatchError(
            f"{path}: {len(records)} weight records, spec requires "
            f"{len(expected)}")
    weights = []
    for rec, (name, shape) in zip(records, expected):
        if rec["name"] != name or tuple(rec["shape"]) != shape:
            raise ShapeMismatchError(
                f"{path}: weight {rec['name']!r} shape {rec['shape']} does "
                f"not match spec ({name!r} {shape})")
        values = np.asarray(rec["values"], dtype=np.float64)
        if values.size != int(np.prod(shape)):
            raise ShapeMismatchError(
                f"{path}: weight {name!r} has {values.size} values, shape "
                f"{shape} requires {int(np.prod(shape))}")
        weights.append((name, Tensor(values.reshape(shape),
                                     requires_grad=True)))
    return TrainedModel(spec, weights, training_meta=doc["training-meta"])
