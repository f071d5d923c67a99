"""Binary cross-entropy training with Adam, with optional adversarial
bias mitigation.

The mitigation alternates per batch between (a) updating an adversary that
tries to recover the protected attribute from the classifier's probability
output, and (b) updating the classifier on ``bce - lambda * adversary_bce``.
Driving the adversary's loss up makes the output distribution carry no
information about the protected attribute; ``lambda`` trades accuracy for
that independence. With ``lambda == 0`` the adversary is skipped entirely so
the run is bit-identical to unmitigated training under the same seed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import (
    ConfigError,
    DivergenceError,
    LabelError,
    TrainingInvariantError,
)
from .models import ModelSpec, TrainedModel, build
from .rngs import substream
from .tensor import Tensor

BCE_EPS = 1e-12


@dataclass
class MitigationConfig:
    lam: float = 1.0
    adversary_steps_per_main_step: int = 1
    adversary_lr: float = 0.001

    def __post_init__(self):
        if self.lam < 0:
            raise ConfigError("mitigation lambda must be >= 0")
        if self.adversary_steps_per_main_step < 1:
            raise ConfigError("adversary steps per main step must be >= 1")


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 64
    learning_rate: float = 0.001
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    seed: int = 0
    mitigation: MitigationConfig | None = None

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning rate must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch size must be positive")
        if self.epochs < 0:
            raise ConfigError("epochs must be non-negative")


def bce_loss(yhat, y):
    """-[y ln(p) + (1-y) ln(1-p)], p clamped away from 0 and 1.

    Works on Tensors (stays on the tape) and on plain floats/arrays;
    ``y`` may be a scalar or a vector of {0,1} labels. Vector inputs
    return the mean loss.
    """
    y_arr = np.asarray(y, dtype=np.float64)
    if not np.all((y_arr == 0.0) | (y_arr == 1.0)):
        raise LabelError(f"labels must be 0 or 1, got {y_arr!r}")
    if isinstance(yhat, Tensor):
        p = T.clip(yhat, BCE_EPS, 1.0 - BCE_EPS)
        yt = Tensor(y_arr)
        loss = -(yt * T.log(p) + (1.0 - yt) * T.log(p * -1.0 + 1.0))
        return T.tmean(loss) if loss.data.ndim else loss
    p = np.clip(np.asarray(yhat, dtype=np.float64), BCE_EPS, 1.0 - BCE_EPS)
    val = -(y_arr * np.log(p) + (1.0 - y_arr) * np.log(1.0 - p))
    return float(np.mean(val))


class Adam:
    """Standard Adam with bias-corrected moment estimates."""

    def __init__(self, params: list[Tensor], lr: float = 0.001,
                 betas: tuple[float, float] = (0.9, 0.999),
                 eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]

    def step(self) -> None:
        self.t += 1
        for i, p in enumerate(self.params):
            if p.grad is None:
                raise TrainingInvariantError(
                    "trainable weight has no gradient; run backward first")
            g = p.grad
            self.m[i] = self.b1 * self.m[i] + (1.0 - self.b1) * g
            self.v[i] = self.b2 * self.v[i] + (1.0 - self.b2) * g * g
            m_hat = self.m[i] / (1.0 - self.b1 ** self.t)
            v_hat = self.v[i] / (1.0 - self.b2 ** self.t)
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    train_accuracy: float
    adversary_loss: float | None = None


def write_training_log(logs: list[EpochLog], path) -> None:
    """One CSV row per epoch; adversary column blank when unmitigated."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train-loss", "train-accuracy", "adversary-loss"])
        for log in logs:
            adv = "" if log.adversary_loss is None else repr(log.adversary_loss)
            w.writerow([log.epoch, repr(log.train_loss),
                        repr(log.train_accuracy), adv])


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    """Seeded per-epoch shuffle (Fisher-Yates via the generator)."""
    perm = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield perm[start:start + batch_size]


def _check_finite_loss(value: float, epoch: int) -> None:
    if not math.isfinite(value):
        raise DivergenceError(f"training loss became non-finite at epoch {epoch}")


def train(model: TrainedModel, features: np.ndarray, labels: np.ndarray,
          config: TrainConfig) -> tuple[TrainedModel, list[EpochLog]]:
    """Unmitigated BCE/Adam training; mutates and returns ``model``."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if config.batch_size > len(features):
        raise ConfigError(
            f"batch size {config.batch_size} exceeds training set size "
            f"{len(features)}")
    shuffle_rng = substream(config.seed, "shuffle")
    dropout_rng = substream(config.seed, "dropout")
    opt = Adam(model.parameters(), lr=config.learning_rate,
               betas=config.adam_betas, eps=config.adam_eps)
    logs: list[EpochLog] = []
    final_loss = None
    for epoch in range(1, config.epochs + 1):
        total_loss, correct, seen = 0.0, 0, 0
        for idx in _batches(len(features), config.batch_size, shuffle_rng):
            x, y = features[idx], labels[idx]
            loss, yhat = _forward_loss(model, x, y, dropout_rng)
            _check_finite_loss(loss.item(), epoch)
            opt.zero_grad()
            loss.backward()
            opt.step()
            total_loss += loss.item() * len(idx)
            correct += int(np.sum((yhat >= 0.5) == (y >= 0.5)))
            seen += len(idx)
        final_loss = total_loss / seen
        logs.append(EpochLog(epoch, final_loss, correct / seen))
    model.training_meta = {"epochs": config.epochs, "final_loss": final_loss,
                           "mitigation": False, "seed": config.seed}
    return model, logs


def _forward_loss(model, x, y, dropout_rng):
    if model.spec.kind == "linear":
        yhat = model.forward(Tensor(x), training=True, dropout_rng=dropout_rng)
        return bce_loss(yhat, y), yhat.data
    # conv processes one example at a time; average the per-example losses
    losses, preds = [], []
    for xi, yi in zip(x, y):
        out = model.forward(Tensor(xi), training=True, dropout_rng=dropout_rng)
        losses.append(bce_loss(out, yi))
        preds.append(out.item())
    total = losses[0]
    for li in losses[1:]:
        total = total + li
    return total * (1.0 / len(losses)), np.array(preds)


def train_mitigated(model: TrainedModel, adversary: TrainedModel,
                    features: np.ndarray, labels: np.ndarray,
                    protected: np.ndarray,
                    config: TrainConfig) -> tuple[TrainedModel, list[EpochLog]]:
    """Adversarial training toward protected-attribute independence.

    ``protected`` is the 0/1 protected-attribute column the adversary tries
    to recover from the model's probability output.
    """
    if config.mitigation is None:
        raise ConfigError("train_mitigated requires a MitigationConfig")
    mit = config.mitigation
    if not adversary.spec.adversary or adversary.spec.kind != model.spec.kind:
        raise ConfigError(
            f"adversary spec {adversary.spec} does not match model kind "
            f"{model.spec.kind!r}")
    if mit.lam == 0.0:
        # exact reduction to the unmitigated path, same RNG schedule
        trained, logs = train(model, features, labels, config)
        trained.training_meta["mitigation"] = True
        return trained, logs

    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    protected = np.asarray(protected, dtype=np.float64)
    if config.batch_size > len(features):
        raise ConfigError("batch size exceeds training set size")
    shuffle_rng = substream(config.seed, "shuffle")
    dropout_rng = substream(config.seed, "dropout")
    opt = Adam(model.parameters(), lr=config.learning_rate,
               betas=config.adam_betas, eps=config.adam_eps)
    adv_opt = Adam(adversary.parameters(), lr=mit.adversary_lr,
                   betas=config.adam_betas, eps=config.adam_eps)
    logs: list[EpochLog] = []
    final_loss = None
    for epoch in range(1, config.epochs + 1):
        total_loss, total_adv, correct, seen = 0.0, 0.0, 0, 0
        for idx in _batches(len(features), config.batch_size, shuffle_rng):
            x, y, a = features[idx], labels[idx], protected[idx]

            # (a) adversary steps on detached model outputs
            yhat_np = _predict_training(model, x, dropout_rng)
            adv_loss_val = None
            for _ in range(mit.adversary_steps_per_main_step):
                adv_in = Tensor(yhat_np.reshape(-1, 1))
                adv_out = adversary.forward(adv_in)
                adv_loss = bce_loss(adv_out, a)
                adv_loss_val = adv_loss.item()
                _check_finite_loss(adv_loss_val, epoch)
                adv_opt.zero_grad()
                adv_loss.backward()
                adv_opt.step()

            # (b) main step: task loss minus lambda * adversary loss
            yhat = _forward_training(model, x, dropout_rng)
            task = bce_loss(yhat, y)
            adv_out = adversary.forward(_to_adversary_input(yhat))
            combined = task + (-mit.lam) * bce_loss(adv_out, a)
            _check_finite_loss(combined.item(), epoch)
            opt.zero_grad()
            adv_opt.zero_grad()  # adversary grads from (b) are discarded
            combined.backward()
            opt.step()
            adv_opt.zero_grad()

            total_loss += task.item() * len(idx)
            total_adv += adv_loss_val * len(idx)
            correct += int(np.sum((yhat.data >= 0.5) == (y >= 0.5)))
            seen += len(idx)
        final_loss = total_loss / seen
        logs.append(EpochLog(epoch, final_loss, correct / seen,
                             total_adv / seen))
    model.training_meta = {"epochs": config.epochs, "final_loss": final_loss,
                           "mitigation": True, "seed": config.seed}
    return model, logs


def _forward_training(model, x, dropout_rng):
    if model.spec.kind != "linear":
        raise ConfigError(
            "mitigated training currently supports the linear architecture; "
            "train conv models without mitigation")
    return model.forward(Tensor(x), training=True, dropout_rng=dropout_rng)


def _predict_training(model, x, dropout_rng):
    # adversary pre-steps see the same dropout-free output distribution
    # audits will see
    if model.spec.kind == "linear":
        return model.forward(Tensor(x)).data.copy()
    return np.array([model.forward(Tensor(xi)).item() for xi in x])


def _to_adversary_input(yhat: Tensor) -> Tensor:
    return T.reshape(yhat, (yhat.shape[0], 1))


def make_adversary(model_spec: ModelSpec, protected_attr_count: int = 1,
                   seed: int | None = None) -> TrainedModel:
    return build(model_spec.adversary_of(protected_attr_count, seed))
