import copy
import os

import numpy as np
import pytest

from conftest import write_synthetic_csv
from fairsense.data import ingest
from fairsense.errors import CollisionError, HarnessError
from fairsense.harness import (
    ExperimentConfig,
    ProxyLabeling,
    build_proxy_labels,
    roc,
    run_experiment,
    sensitivity_distributions,
    write_proxy_labels_csv,
)
from fairsense.models import ModelSpec, build
from fairsense.sensitivity import SensitivityResult


def _result(eid, plain, smooth=None):
    return SensitivityResult(example_id=eid, prediction=0.5,
                             plain_sensitivity=plain,
                             smooth_sensitivity=smooth if smooth is not None
                             else plain)


def _labeling(label_by_id):
    ids = np.array(sorted(label_by_id))
    labels = np.array([label_by_id[i] for i in ids])
    pu = np.zeros(len(ids), dtype=int)
    pm = np.where(labels == "fair", pu, 1 - pu)
    return ProxyLabeling(ids, pu, pm, labels)


def mann_whitney_auc(pos, neg):
    """Independent rank-statistic oracle, ties counted half."""
    wins = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                wins += 1.0
            elif p == q:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def test_proxy_labels_identical_models(synthetic_csv, synthetic_schema):
    train, test = ingest(synthetic_csv, synthetic_schema)
    model = build(ModelSpec(kind="linear", input_dim=test.input_dim, seed=0))
    labeling = build_proxy_labels(model, model, test)
    assert labeling.not_match == 0
    assert labeling.match == len(test)
    assert all(l == "fair" for l in labeling.labels)


def test_proxy_labels_complementary_models(synthetic_csv, synthetic_schema):
    train, test = ingest(synthetic_csv, synthetic_schema)
    model = build(ModelSpec(kind="linear", input_dim=test.input_dim, seed=0))
    flipped = copy.deepcopy(model)
    # negating the head flips sigmoid around 0.5, complementing every
    # thresholded prediction
    for name, w in flipped.weights:
        if name.startswith("output"):
            w.data[...] = -w.data
    labeling = build_proxy_labels(model, flipped, test)
    assert labeling.match == 0
    assert labeling.not_match == len(test)


def test_proxy_labels_symmetric_in_model_roles(synthetic_csv,
                                               synthetic_schema):
    train, test = ingest(synthetic_csv, synthetic_schema)
    a = build(ModelSpec(kind="linear", input_dim=test.input_dim, seed=1))
    b = build(ModelSpec(kind="linear", input_dim=test.input_dim, seed=2))
    ab = build_proxy_labels(a, b, test)
    ba = build_proxy_labels(b, a, test)
    assert ab.match == ba.match
    assert ab.not_match == ba.not_match


def test_proxy_labels_dimension_mismatch(synthetic_csv, synthetic_schema):
    _, test = ingest(synthetic_csv, synthetic_schema)
    small = build(ModelSpec(kind="linear", input_dim=2, seed=0))
    ok = build(ModelSpec(kind="linear", input_dim=test.input_dim, seed=0))
    with pytest.raises(HarnessError):
        build_proxy_labels(small, ok, test)


def test_distributions_all_equal_values():
    labeling = _labeling({1: "fair", 2: "fair", 3: "unfair"})
    audits = [_result(1, 0.4), _result(2, 0.4), _result(3, 0.4)]
    summary = sensitivity_distributions(labeling, audits, score="plain",
                                        bins=10)
    assert summary.fair_counts[0] == 2 and summary.fair_counts[1:].sum() == 0
    assert summary.unfair_counts[0] == 1
    assert summary.fair_mean == summary.unfair_mean == 0.4


def test_distribution_counts_partition_classes():
    labeling = _labeling({i: ("fair" if i % 3 else "unfair")
                          for i in range(30)})
    rng = np.random.default_rng(0)
    audits = [_result(i, float(rng.random())) for i in range(30)]
    summary = sensitivity_distributions(labeling, audits, score="plain")
    assert summary.fair_counts.sum() == labeling.match
    assert summary.unfair_counts.sum() == labeling.not_match
    # two-path check: class means recomputed directly from the raw values
    fair_vals = [a.plain_sensitivity for a in audits if a.example_id % 3]
    assert summary.fair_mean == pytest.approx(np.mean(fair_vals), rel=1e-12)


def test_distributions_reject_id_mismatch():
    labeling = _labeling({1: "fair", 2: "unfair"})
    audits = [_result(1, 0.1), _result(99, 0.2)]
    with pytest.raises(HarnessError):
        sensitivity_distributions(labeling, audits)


def test_roc_perfect_separation():
    labeling = _labeling({1: "unfair", 2: "unfair", 3: "fair", 4: "fair"})
    audits = [_result(1, 0.9), _result(2, 0.8), _result(3, 0.2),
              _result(4, 0.1)]
    curve = roc(labeling, audits, score="plain")
    assert curve.auc == 1.0
    assert curve.points[0] == (0.0, 0.0)
    assert curve.points[-1] == (1.0, 1.0)


def test_roc_constant_scores_is_chance():
    labeling = _labeling({1: "unfair", 2: "fair", 3: "unfair", 4: "fair"})
    audits = [_result(i, 0.5) for i in (1, 2, 3, 4)]
    curve = roc(labeling, audits, score="plain")
    assert curve.auc == 0.5
    assert curve.points == [(0.0, 0.0), (1.0, 1.0)]


def test_roc_hand_enumerated_rank_statistic():
    labeling = _labeling({1: "unfair", 2: "unfair", 3: "fair", 4: "fair"})
    audits = [_result(1, 0.9), _result(2, 0.8), _result(3, 0.7),
              _result(4, 0.1)]
    assert roc(labeling, audits, score="plain").auc == 1.0
    # swap one pair: fair 0.8, unfair 0.7
    audits = [_result(1, 0.9), _result(2, 0.7), _result(3, 0.8),
              _result(4, 0.1)]
    assert roc(labeling, audits, score="plain").auc == 0.75


def test_roc_single_class_is_error():
    labeling = _labeling({1: "fair", 2: "fair"})
    audits = [_result(1, 0.3), _result(2, 0.4)]
    with pytest.raises(HarnessError):
        roc(labeling, audits)


def test_roc_monotone_and_trapezoid_consistency():
    rng = np.random.default_rng(3)
    n = 40
    labeling = _labeling({i: ("unfair" if rng.random() < 0.4 else "fair")
                          for i in range(n)})
    # quantized scores force ties
    audits = [_result(i, float(np.round(rng.random(), 1))) for i in range(n)]
    curve = roc(labeling, audits, score="plain")
    xs, ys = zip(*curve.points)
    assert all(x1 >= x0 for x0, x1 in zip(xs, xs[1:]))
    assert all(y1 >= y0 for y0, y1 in zip(ys, ys[1:]))
    trapz = float(np.trapezoid(ys, xs))
    assert abs(curve.auc - trapz) < 1e-12


def test_roc_auc_equals_mann_whitney_with_ties():
    rng = np.random.default_rng(11)
    for trial in range(30):
        n = int(rng.integers(4, 30))
        labels = {}
        scores = {}
        for i in range(n):
            labels[i] = "unfair" if rng.random() < 0.5 else "fair"
            scores[i] = float(rng.choice([0.1, 0.3, 0.3, 0.5, 0.9]))
        labels[n] = "unfair"
        labels[n + 1] = "fair"
        scores[n] = 0.3
        scores[n + 1] = 0.3
        labeling = _labeling(labels)
        audits = [_result(i, scores[i]) for i in sorted(labels)]
        curve = roc(labeling, audits, score="plain")
        pos = [scores[i] for i in labels if labels[i] == "unfair"]
        neg = [scores[i] for i in labels if labels[i] == "fair"]
        assert curve.auc == pytest.approx(mann_whitney_auc(pos, neg),
                                          abs=1e-12)


def _tiny_experiment_config(csv_path, out_dir, schema_file):
    return ExperimentConfig(
        csv_path=str(csv_path), out_dir=str(out_dir),
        schema_name=None, schema_path=str(schema_file),
        root_seed=1, epochs=10, batch_size=32, n_samples=4, sigma=0.1,
        mitigation_lambda=4.0)


@pytest.fixture
def experiment_inputs(tmp_path, synthetic_schema):
    from fairsense.data import save_schema
    csv_path = write_synthetic_csv(tmp_path / "synthetic.csv", n=250, seed=3)
    schema_file = tmp_path / "schema.json"
    save_schema(synthetic_schema, schema_file)
    return csv_path, schema_file


def test_experiment_end_to_end(tmp_path, experiment_inputs):
    csv_path, schema_file = experiment_inputs
    out = tmp_path / "run1"
    manifest = run_experiment(_tiny_experiment_config(csv_path, out,
                                                      schema_file))
    for artifact in manifest["outputs"]:
        assert os.path.exists(out / artifact), artifact
    assert os.path.exists(out / "manifest.json")
    assert manifest["inputs"]["csv"]["sha256"]
    assert manifest["seeds"]["split"] == 1
    # with this config the models disagree on some test examples, so the
    # full per-class artifact set is produced
    assert "roc_smooth_mitigated.csv" in manifest["outputs"]


def test_experiment_collision_without_resume(tmp_path, experiment_inputs):
    csv_path, schema_file = experiment_inputs
    out = tmp_path / "run1"
    run_experiment(_tiny_experiment_config(csv_path, out, schema_file))
    with pytest.raises(CollisionError):
        run_experiment(_tiny_experiment_config(csv_path, out, schema_file))


def test_experiment_rerun_is_byte_identical(tmp_path, experiment_inputs):
    csv_path, schema_file = experiment_inputs
    out1, out2 = tmp_path / "run1", tmp_path / "run2"
    m1 = run_experiment(_tiny_experiment_config(csv_path, out1, schema_file))
    m2 = run_experiment(_tiny_experiment_config(csv_path, out2, schema_file))
    assert m1["outputs"] == m2["outputs"]
    for artifact in m1["outputs"]:
        assert (out1 / artifact).read_bytes() == \
            (out2 / artifact).read_bytes(), artifact


def test_proxy_labels_csv(tmp_path):
    labeling = _labeling({1: "fair", 2: "unfair"})
    path = tmp_path / "proxy.csv"
    write_proxy_labels_csv(labeling, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == ("example-id,prediction-unmitigated,"
                        "prediction-mitigated,proxy-label")
    assert len(lines) == 3
