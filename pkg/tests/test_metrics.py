import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairsense.errors import GroupCoverageError, LabelError
from fairsense.metrics import (
    GroupConfusion,
    compute_group_metrics,
    confusion_by_group,
    metrics_from_confusions,
    threshold_predictions,
    write_metrics_csv,
)


def brute_force_metrics(rows):
    """Independent oracle: direct counting over (pred, label, group) rows."""
    def rate(pred_val, cond, grp):
        matching = [r for r in rows if r[2] == grp and cond(r)]
        if not matching:
            return None
        return sum(1 for r in matching if r[0] == pred_val) / len(matching)

    out = {}
    pr_p = rate(1, lambda r: True, 1)
    pr_u = rate(1, lambda r: True, 0)
    out["di"] = None if pr_p in (None, 0) or pr_u is None else pr_u / pr_p
    out["spd"] = None if None in (pr_p, pr_u) else pr_u - pr_p
    tpr_p = rate(1, lambda r: r[1] == 1, 1)
    tpr_u = rate(1, lambda r: r[1] == 1, 0)
    out["eod"] = None if None in (tpr_p, tpr_u) else tpr_u - tpr_p
    fpr_p = rate(1, lambda r: r[1] == 0, 1)
    fpr_u = rate(1, lambda r: r[1] == 0, 0)
    if None in (tpr_p, tpr_u, fpr_p, fpr_u):
        out["aod"] = None
    else:
        out["aod"] = ((fpr_u - fpr_p) + (tpr_u - tpr_p)) / 2
    return out


def assert_matches_oracle(rows):
    pred, lab, grp = (np.array(c) for c in zip(*rows))
    report = compute_group_metrics(pred, lab, grp)
    oracle = brute_force_metrics(rows)
    pairs = [
        (report.disparate_impact, oracle["di"]),
        (report.statistical_parity_difference, oracle["spd"]),
        (report.equal_opportunity_difference, oracle["eod"]),
        (report.average_odds_difference, oracle["aod"]),
    ]
    for metric, want in pairs:
        if want is None:
            assert not metric.defined
        else:
            assert metric.defined
            assert metric.value == want


def test_symmetric_groups_are_neutral():
    rows = [(1, 1, 1), (0, 0, 1), (1, 0, 1), (0, 1, 1),
            (1, 1, 0), (0, 0, 0), (1, 0, 0), (0, 1, 0)]
    pred, lab, grp = (np.array(c) for c in zip(*rows))
    report = compute_group_metrics(pred, lab, grp)
    assert report.disparate_impact.value == 1.0
    assert report.statistical_parity_difference.value == 0.0
    assert report.equal_opportunity_difference.value == 0.0
    assert report.average_odds_difference.value == 0.0


def test_hand_counted_example():
    # priv: 10 positives of 20; unpriv: 5 positives of 20
    rows = [(1, 1, 1)] * 10 + [(0, 0, 1)] * 10 + \
           [(1, 1, 0)] * 5 + [(0, 0, 0)] * 15
    pred, lab, grp = (np.array(c) for c in zip(*rows))
    report = compute_group_metrics(pred, lab, grp)
    assert report.disparate_impact.value == 0.5
    assert report.statistical_parity_difference.value == -0.25


def test_zero_denominator_flags_undefined():
    # unprivileged group has no actual positives
    rows = [(1, 1, 1), (0, 0, 1), (1, 0, 0), (0, 0, 0)]
    pred, lab, grp = (np.array(c) for c in zip(*rows))
    report = compute_group_metrics(pred, lab, grp)
    assert not report.equal_opportunity_difference.defined
    assert not report.average_odds_difference.defined
    assert report.disparate_impact.defined
    assert report.statistical_parity_difference.defined


def test_single_group_raises():
    with pytest.raises(GroupCoverageError):
        compute_group_metrics([1, 0], [1, 0], [1, 1])


def test_bad_labels_raise():
    with pytest.raises(LabelError):
        compute_group_metrics([1, 2], [1, 0], [1, 0])


@st.composite
def prediction_sets(draw):
    n = draw(st.integers(min_value=2, max_value=40))
    rows = [(draw(st.integers(0, 1)), draw(st.integers(0, 1)),
             draw(st.integers(0, 1))) for _ in range(n)]
    # ensure group coverage
    rows.append((draw(st.integers(0, 1)), draw(st.integers(0, 1)), 0))
    rows.append((draw(st.integers(0, 1)), draw(st.integers(0, 1)), 1))
    return rows


@given(prediction_sets())
@settings(max_examples=100, deadline=None)
def test_matches_brute_force_oracle(rows):
    assert_matches_oracle(rows)


@given(prediction_sets())
@settings(max_examples=50, deadline=None)
def test_group_swap_identities(rows):
    pred, lab, grp = (np.array(c) for c in zip(*rows))
    a = compute_group_metrics(pred, lab, grp)
    b = compute_group_metrics(pred, lab, 1 - grp)
    for get in (lambda r: r.statistical_parity_difference,
                lambda r: r.equal_opportunity_difference,
                lambda r: r.average_odds_difference):
        ma, mb = get(a), get(b)
        if ma.defined and mb.defined:
            assert ma.value == -mb.value
    if a.disparate_impact.defined and b.disparate_impact.defined \
            and a.disparate_impact.value != 0:
        assert b.disparate_impact.value == \
            pytest.approx(1.0 / a.disparate_impact.value, rel=1e-12)


@given(prediction_sets())
@settings(max_examples=50, deadline=None)
def test_permutation_invariance(rows):
    pred, lab, grp = (np.array(c) for c in zip(*rows))
    perm = np.random.default_rng(0).permutation(len(rows))
    a = compute_group_metrics(pred, lab, grp)
    b = compute_group_metrics(pred[perm], lab[perm], grp[perm])
    assert a == b


@given(prediction_sets())
@settings(max_examples=50, deadline=None)
def test_two_path_consistency(rows):
    # metrics via GroupConfusion equal metrics from raw predictions
    pred, lab, grp = (np.array(c) for c in zip(*rows))
    direct = compute_group_metrics(pred, lab, grp)
    priv, unpriv = confusion_by_group(pred, lab, grp)
    assert metrics_from_confusions(priv, unpriv) == direct


def test_confusion_rates():
    c = GroupConfusion(tp=3, fp=1, tn=4, fn=2)
    assert c.size == 10
    assert c.positive_rate == 0.4
    assert c.tpr == 0.6
    assert c.fpr == 0.2


def test_threshold_predictions():
    np.testing.assert_array_equal(
        threshold_predictions([0.1, 0.5, 0.9], 0.5), [0, 1, 1])


def test_report_text_and_csv(tmp_path):
    rows = [(1, 1, 1), (0, 0, 1), (1, 0, 0), (0, 1, 0)]
    pred, lab, grp = (np.array(c) for c in zip(*rows))
    report = compute_group_metrics(pred, lab, grp)
    text = report.as_text()
    assert "disparate-impact" in text
    assert "undefined" not in text
    path = tmp_path / "metrics.csv"
    write_metrics_csv(report, path, tag="unmitigated")
    assert path.read_text().splitlines()[0] == "model,metric,value,defined"
