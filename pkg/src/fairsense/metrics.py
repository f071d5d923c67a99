"""Group-fairness statistics over thresholded predictions.

Four metrics, all contrasting the unprivileged group against the privileged
one:

- disparate impact:              P(yhat=1 | unpriv) / P(yhat=1 | priv)
- statistical parity difference: P(yhat=1 | unpriv) - P(yhat=1 | priv)
- equal opportunity difference:  TPR_unpriv - TPR_priv
- average odds difference:       ((FPR_u - FPR_p) + (TPR_u - TPR_p)) / 2

A metric whose denominator is zero is reported as explicitly undefined,
never as NaN or a sentinel number.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import GroupCoverageError, LabelError


@dataclass
class GroupConfusion:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def size(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def positive_rate(self) -> float | None:
        return (self.tp + self.fp) / self.size if self.size else None

    @property
    def tpr(self) -> float | None:
        pos = self.tp + self.fn
        return self.tp / pos if pos else None

    @property
    def fpr(self) -> float | None:
        neg = self.fp + self.tn
        return self.fp / neg if neg else None


@dataclass
class Metric:
    value: float | None
    defined: bool

    @staticmethod
    def undefined() -> "Metric":
        return Metric(None, False)

    @staticmethod
    def of(value: float) -> "Metric":
        return Metric(float(value), True)


@dataclass
class GroupMetricsReport:
    disparate_impact: Metric
    statistical_parity_difference: Metric
    equal_opportunity_difference: Metric
    average_odds_difference: Metric
    privileged: GroupConfusion
    unprivileged: GroupConfusion

    def as_rows(self) -> list[tuple[str, str]]:
        rows = []
        for name, metric in [
            ("disparate-impact", self.disparate_impact),
            ("statistical-parity-difference",
             self.statistical_parity_difference),
            ("equal-opportunity-difference",
             self.equal_opportunity_difference),
            ("average-odds-difference", self.average_odds_difference),
        ]:
            rows.append((name, repr(metric.value) if metric.defined
                         else "undefined"))
        rows.append(("privileged-size", str(self.privileged.size)))
        rows.append(("unprivileged-size", str(self.unprivileged.size)))
        return rows

    def as_text(self) -> str:
        return "\n".join(f"{k} = {v}" for k, v in self.as_rows()) + "\n"


def confusion_by_group(y_pred, y_true, group) -> tuple[GroupConfusion,
                                                       GroupConfusion]:
    """Split counts by group flag (1 = privileged)."""
    y_pred = np.asarray(y_pred)
    y_true = np.asarray(y_true)
    group = np.asarray(group)
    for name, arr in [("prediction", y_pred), ("label", y_true)]:
        if not np.all((arr == 0) | (arr == 1)):
            raise LabelError(f"{name}s must be 0 or 1")
    if len(np.unique(group)) < 2:
        raise GroupCoverageError(
            "group metrics need both privileged and unprivileged examples")
    out = []
    for flag in (1, 0):
        mask = group == flag
        p, t = y_pred[mask], y_true[mask]
        out.append(GroupConfusion(
            tp=int(np.sum((p == 1) & (t == 1))),
            fp=int(np.sum((p == 1) & (t == 0))),
            tn=int(np.sum((p == 0) & (t == 0))),
            fn=int(np.sum((p == 0) & (t == 1))),
        ))
    return out[0], out[1]


def metrics_from_confusions(priv: GroupConfusion,
                            unpriv: GroupConfusion) -> GroupMetricsReport:
    pr_p, pr_u = priv.positive_rate, unpriv.positive_rate
    di = (Metric.of(pr_u / pr_p) if pr_p not in (None, 0.0) and pr_u is not None
          else Metric.undefined())
    spd = (Metric.of(pr_u - pr_p) if pr_p is not None and pr_u is not None
           else Metric.undefined())
    tpr_p, tpr_u = priv.tpr, unpriv.tpr
    eod = (Metric.of(tpr_u - tpr_p) if tpr_p is not None and tpr_u is not None
           else Metric.undefined())
    fpr_p, fpr_u = priv.fpr, unpriv.fpr
    if None in (tpr_p, tpr_u, fpr_p, fpr_u):
        aod = Metric.undefined()
    else:
        aod = Metric.of(((fpr_u - fpr_p) + (tpr_u - tpr_p)) / 2.0)
    return GroupMetricsReport(di, spd, eod, aod, priv, unpriv)


def compute_group_metrics(y_pred, y_true, group) -> GroupMetricsReport:
    """Metrics from raw thresholded predictions and group flags."""
    priv, unpriv = confusion_by_group(y_pred, y_true, group)
    return metrics_from_confusions(priv, unpriv)


def threshold_predictions(probabilities, threshold: float = 0.5) -> np.ndarray:
    return (np.asarray(probabilities, dtype=np.float64) >= threshold
            ).astype(int)


def write_metrics_csv(report: GroupMetricsReport, path,
                      tag: str = "") -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["model", "metric", "value", "defined"])
        for name, metric in [
            ("disparate-impact", report.disparate_impact),
            ("statistical-parity-difference",
             report.statistical_parity_difference),
            ("equal-opportunity-difference",
             report.equal_opportunity_difference),
            ("average-odds-difference", report.average_odds_difference),
        ]:
            w.writerow([tag, name,
                        repr(metric.value) if metric.defined else "",
                        str(metric.defined).lower()])
        w.writerow([tag, "privileged-size", report.privileged.size, "true"])
        w.writerow([tag, "unprivileged-size", report.unprivileged.size,
                    "true"])
