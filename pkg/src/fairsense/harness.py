"""Evaluation harness: proxy fairness labels, distributions, ROC, and the
end-to-end experiment runner.

Ground truth for individual fairness does not exist, so the proxy is model
agreement: a test prediction is labeled "fair" when the mitigated and
unmitigated models agree on it and "unfair" when they disagree. Sensitivity
is then scored as a classifier for that proxy label (positive class =
"unfair": higher sensitivity means predicted-unfair).
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import data as D
from . import metrics as M
from .errors import CollisionError, ConfigError, HarnessError
from .models import ModelSpec, TrainedModel, build, predict_batch, save
from .sensitivity import (
    SensitivityConfig,
    SensitivityResult,
    audit_dataset,
    write_audit_csv,
)
from .training import (
    MitigationConfig,
    TrainConfig,
    make_adversary,
    train,
    train_mitigated,
    write_training_log,
)

FAIR, UNFAIR = "fair", "unfair"


@dataclass
class ProxyLabeling:
    example_ids: np.ndarray
    pred_unmitigated: np.ndarray  # thresholded 0/1
    pred_mitigated: np.ndarray
    labels: np.ndarray  # FAIR / UNFAIR strings

    @property
    def match(self) -> int:
        return int(np.sum(self.labels == FAIR))

    @property
    def not_match(self) -> int:
        return int(np.sum(self.labels == UNFAIR))

    def by_id(self) -> dict[int, str]:
        return {int(e): str(l) for e, l in zip(self.example_ids, self.labels)}


def build_proxy_labels(unmitigated: TrainedModel, mitigated: TrainedModel,
                       test: D.Dataset,
                       threshold: float = 0.5) -> ProxyLabeling:
    """Per-example agreement labels between the two models on a test split."""
    if unmitigated.spec.input_dim != test.input_dim or \
            mitigated.spec.input_dim != test.input_dim:
        raise HarnessError(
            f"model input dims ({unmitigated.spec.input_dim}, "
            f"{mitigated.spec.input_dim}) do not match test split "
            f"({test.input_dim})")
    pu = M.threshold_predictions(predict_batch(unmitigated, test.features),
                                 threshold)
    pm = M.threshold_predictions(predict_batch(mitigated, test.features),
                                 threshold)
    labels = np.where(pu == pm, FAIR, UNFAIR)
    return ProxyLabeling(test.example_ids.copy(), pu, pm, labels)


def write_proxy_labels_csv(labeling: ProxyLabeling, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["example-id", "prediction-unmitigated",
                    "prediction-mitigated", "proxy-label"])
        for eid, pu, pm, lab in zip(labeling.example_ids,
                                    labeling.pred_unmitigated,
                                    labeling.pred_mitigated, labeling.labels):
            w.writerow([int(eid), int(pu), int(pm), lab])


# ---------------------------------------------------------------------------
# sensitivity distributions


@dataclass
class DistributionSummary:
    bin_edges: np.ndarray
    fair_counts: np.ndarray
    unfair_counts: np.ndarray
    fair_mean: float
    unfair_mean: float
    fair_median: float
    unfair_median: float


def sensitivity_distributions(labeling: ProxyLabeling,
                              audits: list[SensitivityResult],
                              score: str = "smooth",
                              bins: int = 50) -> DistributionSummary:
    """Shared-edge histograms of sensitivity for the two proxy classes."""
    values = _scores_by_class(labeling, audits, score)
    fair_vals, unfair_vals = values[FAIR], values[UNFAIR]
    if len(fair_vals) == 0 or len(unfair_vals) == 0:
        raise HarnessError(
            "distributions need at least one example of each proxy class")
    all_vals = np.concatenate([fair_vals, unfair_vals])
    lo, hi = float(all_vals.min()), float(all_vals.max())
    if lo == hi:
        hi = lo + 1.0  # degenerate: everything lands in the first bin
    edges = np.linspace(lo, hi, bins + 1)
    fair_counts, _ = np.histogram(fair_vals, bins=edges)
    unfair_counts, _ = np.histogram(unfair_vals, bins=edges)
    return DistributionSummary(
        bin_edges=edges,
        fair_counts=fair_counts,
        unfair_counts=unfair_counts,
        fair_mean=float(fair_vals.mean()),
        unfair_mean=float(unfair_vals.mean()),
        fair_median=float(np.median(fair_vals)),
        unfair_median=float(np.median(unfair_vals)),
    )


def _scores_by_class(labeling: ProxyLabeling,
                     audits: list[SensitivityResult],
                     score: str) -> dict[str, np.ndarray]:
    if score not in ("plain", "smooth"):
        raise ConfigError(f"unknown score kind {score!r}")
    label_by_id = labeling.by_id()
    audit_ids = {r.example_id for r in audits}
    if audit_ids != set(label_by_id):
        raise HarnessError("audit example-ids do not match proxy labeling")
    out = {FAIR: [], UNFAIR: []}
    for r in audits:
        v = r.plain_sensitivity if score == "plain" else r.smooth_sensitivity
        out[label_by_id[r.example_id]].append(v)
    return {k: np.asarray(v, dtype=np.float64) for k, v in out.items()}


def write_histogram_csv(summary: DistributionSummary, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["bin-lo", "bin-hi", "fair-count", "unfair-count"])
        for i in range(len(summary.fair_counts)):
            w.writerow([repr(float(summary.bin_edges[i])),
                        repr(float(summary.bin_edges[i + 1])),
                        int(summary.fair_counts[i]),
                        int(summary.unfair_counts[i])])
        w.writerow(["fair-mean", repr(summary.fair_mean),
                    "unfair-mean", repr(summary.unfair_mean)])
        w.writerow(["fair-median", repr(summary.fair_median),
                    "unfair-median", repr(summary.unfair_median)])


# ---------------------------------------------------------------------------
# ROC


@dataclass
class RocCurve:
    points: list[tuple[float, float]]  # (FPR, TPR), (0,0) .. (1,1)
    auc: float
    score: str  # higher sensitivity => predicted "unfair" (positive class)


def roc(labeling: ProxyLabeling, audits: list[SensitivityResult],
        score: str = "smooth") -> RocCurve:
    """ROC of sensitivity as a classifier for the "unfair" proxy class.

    Equal scores are grouped into a single threshold step, so ties
    contribute diagonal segments and the trapezoidal AUC equals the
    Mann-Whitney rank statistic.
    """
    values = _scores_by_class(labeling, audits, score)
    pos, neg = values[UNFAIR], values[FAIR]
    if len(pos) == 0 or len(neg) == 0:
        raise HarnessError(
            "ROC needs at least one example of each proxy class")
    scores = np.concatenate([pos, neg])
    truth = np.concatenate([np.ones(len(pos)), np.zeros(len(neg))])
    order = np.argsort(-scores, kind="stable")
    scores, truth = scores[order], truth[order]
    points = [(0.0, 0.0)]
    tp = fp = 0
    i = 0
    n = len(scores)
    while i < n:
        j = i
        while j < n and scores[j] == scores[i]:
            j += 1
        tp += int(truth[i:j].sum())
        fp += (j - i) - int(truth[i:j].sum())
        points.append((fp / len(neg), tp / len(pos)))
        i = j
    auc = 0.0
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        auc += (x1 - x0) * (y0 + y1) / 2.0
    return RocCurve(points=points, auc=auc, score=score)


def write_roc_csv(curve: RocCurve, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["fpr", "tpr"])
        for x, y in curve.points:
            w.writerow([repr(x), repr(y)])
        w.writerow(["auc", repr(curve.auc)])


# ---------------------------------------------------------------------------
# end-to-end experiment


@dataclass
class ExperimentConfig:
    csv_path: str
    out_dir: str
    schema_name: str | None = "adult-sex"  # built-in schema key
    schema_path: str | None = None  # overrides schema_name
    model_kind: str = "linear"
    root_seed: int = 0
    test_fraction: float = 0.2
    epochs: int = 50
    batch_size: int = 64
    learning_rate: float = 0.001
    mitigation_lambda: float = 1.0
    adversary_lr: float = 0.001
    adversary_steps: int = 1
    n_samples: int = 50
    sigma: float = 0.1
    threshold: float = 0.5
    histogram_bins: int = 50
    resume: bool = False


EXPERIMENT_OUTPUTS = (
    "train.dataset", "test.dataset",
    "model_unmitigated.model", "model_mitigated.model",
    "training_log_unmitigated.csv", "training_log_mitigated.csv",
    "audit_unmitigated.csv", "audit_mitigated.csv",
    "group_metrics_unmitigated.csv", "group_metrics_mitigated.csv",
    "proxy_labels.csv",
    "histogram_plain_unmitigated.csv", "histogram_smooth_unmitigated.csv",
    "histogram_plain_mitigated.csv", "histogram_smooth_mitigated.csv",
    "roc_plain_unmitigated.csv", "roc_smooth_unmitigated.csv",
    "roc_plain_mitigated.csv", "roc_smooth_mitigated.csv",
    "summary.csv",
)


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _resolve_schema(config: ExperimentConfig) -> D.DatasetSchema:
    if config.schema_path:
        return D.load_schema(config.schema_path)
    if config.schema_name not in D.BUILTIN_SCHEMAS:
        raise ConfigError(
            f"unknown built-in schema {config.schema_name!r}; available: "
            f"{sorted(D.BUILTIN_SCHEMAS)}")
    return D.BUILTIN_SCHEMAS[config.schema_name]()


def run_experiment(config: ExperimentConfig) -> dict:
    """Train both models, audit them, and emit the full report bundle.

    Returns the manifest (also written to ``out_dir/manifest.json``).
    All randomness flows from ``root_seed`` through named substreams;
    rerunning with the same config reproduces every output byte for byte.
    """
    out = config.out_dir
    os.makedirs(out, exist_ok=True)
    existing = [f for f in EXPERIMENT_OUTPUTS
                if os.path.exists(os.path.join(out, f))]
    if existing and not config.resume:
        raise CollisionError(
            f"{out} already holds experiment outputs {existing[:3]}...; "
            f"pass resume/--resume to overwrite")

    schema = _resolve_schema(config)
    train_ds, test_ds = D.ingest(config.csv_path, schema,
                                 split_seed=config.root_seed,
                                 test_fraction=config.test_fraction)
    D.save_dataset(train_ds, os.path.join(out, "train.dataset"))
    D.save_dataset(test_ds, os.path.join(out, "test.dataset"))

    seeds = {
        "split": config.root_seed,
        "model-unmitigated": config.root_seed * 1000 + 1,
        "model-mitigated": config.root_seed * 1000 + 2,
        "adversary": config.root_seed * 1000 + 3,
        "noise": config.root_seed * 1000 + 4,
    }

    spec_u = ModelSpec(kind=config.model_kind, input_dim=train_ds.input_dim,
                       seed=seeds["model-unmitigated"])
    model_u = build(spec_u)
    tc = TrainConfig(epochs=config.epochs, batch_size=config.batch_size,
                     learning_rate=config.learning_rate,
                     seed=seeds["model-unmitigated"])
    model_u, logs_u = train(model_u, train_ds.features, train_ds.labels, tc)
    write_training_log(logs_u, os.path.join(out, "training_log_unmitigated.csv"))
    save(model_u, os.path.join(out, "model_unmitigated.model"))

    spec_m = ModelSpec(kind=config.model_kind, input_dim=train_ds.input_dim,
                       seed=seeds["model-mitigated"])
    model_m = build(spec_m)
    adversary = make_adversary(spec_m, seed=seeds["adversary"])
    tcm = TrainConfig(
        epochs=config.epochs, batch_size=config.batch_size,
        learning_rate=config.learning_rate, seed=seeds["model-mitigated"],
        mitigation=MitigationConfig(
            lam=config.mitigation_lambda,
            adversary_steps_per_main_step=config.adversary_steps,
            adversary_lr=config.adversary_lr))
    protected = train_ds.features[:, train_ds.protected_index]
    model_m, logs_m = train_mitigated(model_m, adversary, train_ds.features,
                                      train_ds.labels, protected, tcm)
    write_training_log(logs_m, os.path.join(out, "training_log_mitigated.csv"))
    save(model_m, os.path.join(out, "model_mitigated.model"))

    labeling = build_proxy_labels(model_u, model_m, test_ds,
                                  threshold=config.threshold)
    write_proxy_labels_csv(labeling, os.path.join(out, "proxy_labels.csv"))

    sens_cfg = SensitivityConfig(n_samples=config.n_samples,
                                 sigma=config.sigma,
                                 noise_seed=seeds["noise"])
    audits = {}
    proxy_by_id = labeling.by_id()
    for tag, model in [("unmitigated", model_u), ("mitigated", model_m)]:
        results = audit_dataset(model, test_ds.features, test_ds.example_ids,
                                test_ds.protected_index, sens_cfg)
        audits[tag] = results
        write_audit_csv(results, os.path.join(out, f"audit_{tag}.csv"),
                        sens_cfg, labels=test_ds.labels,
                        proxy_labels=proxy_by_id)
        preds = M.threshold_predictions(
            predict_batch(model, test_ds.features), config.threshold)
        report = M.compute_group_metrics(preds, test_ds.labels, test_ds.group)
        M.write_metrics_csv(report,
                            os.path.join(out, f"group_metrics_{tag}.csv"),
                            tag=tag)

    # histograms and ROC compare the two proxy classes, so they only exist
    # when the models disagree on at least one example and agree on another
    degenerate = labeling.match == 0 or labeling.not_match == 0
    written = [f for f in EXPERIMENT_OUTPUTS
               if not (degenerate and (f.startswith("histogram_")
                                       or f.startswith("roc_")))]
    if not degenerate:
        for tag in ("unmitigated", "mitigated"):
            for score in ("plain", "smooth"):
                summary = sensitivity_distributions(
                    labeling, audits[tag], score=score,
                    bins=config.histogram_bins)
                write_histogram_csv(
                    summary, os.path.join(out, f"histogram_{score}_{tag}.csv"))
                curve = roc(labeling, audits[tag], score=score)
                write_roc_csv(curve,
                              os.path.join(out, f"roc_{score}_{tag}.csv"))

    with open(os.path.join(out, "summary.csv"), "w", newline="",
              encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["key", "value"])
        w.writerow(["match", labeling.match])
        w.writerow(["not-match", labeling.not_match])
        w.writerow(["test-size", len(test_ds)])
        w.writerow(["train-size", len(train_ds)])
        w.writerow(["proxy-degenerate", str(degenerate).lower()])

    manifest = {
        "config": {k: v for k, v in vars(config).items()},
        "seeds": seeds,
        "inputs": {"csv": {"path": config.csv_path,
                           "sha256": _sha256(config.csv_path)},
                   "schema-fingerprint": schema.fingerprint()},
        "outputs": sorted(written),
    }
    with open(os.path.join(out, "manifest.json"), "w", encoding="utf-8") as fh:
        fh.write(json.dumps(manifest, sort_keys=True, indent=1) + "\n")
    return manifest
