"""Command-line interface.

Subcommands: ingest, train, train-fair, audit, group-metrics, proxy-labels,
roc, experiment. Exit codes: 0 success, 2 schema error, 3 data error,
4 config error, 5 training divergence, 6 output collision, 1 anything else.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import data as D
from . import harness as H
from . import metrics as M
from .errors import FairsenseError
from .models import ModelSpec, build, load, predict_batch, save
from .sensitivity import SensitivityConfig, audit_dataset, write_audit_csv
from .training import (
    MitigationConfig,
    TrainConfig,
    make_adversary,
    train,
    train_mitigated,
    write_training_log,
)


def _schema_args(p):
    p.add_argument("--schema", default="adult-sex",
                   help="built-in schema name (%s)" %
                        ", ".join(sorted(D.BUILTIN_SCHEMAS)))
    p.add_argument("--schema-file", default=None,
                   help="path to a JSON schema file (overrides --schema)")


def _resolve_schema(args):
    if args.schema_file:
        return D.load_schema(args.schema_file)
    if args.schema not in D.BUILTIN_SCHEMAS:
        raise D.SchemaError(f"unknown built-in schema {args.schema!r}")
    return D.BUILTIN_SCHEMAS[args.schema]()


def _train_args(p):
    p.add_argument("--model-kind", choices=("linear", "conv"),
                   default="linear")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--learning-rate", type=float, default=0.001)
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fairsense",
        description="Audit tabular classifiers for per-prediction reliance "
                    "on a protected attribute.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="clean/encode/split a CSV and cache "
                                      "the normalized splits")
    p.add_argument("csv")
    _schema_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--train-out", required=True)
    p.add_argument("--test-out", required=True)

    p = sub.add_parser("train", help="train a model without mitigation")
    p.add_argument("train_dataset")
    p.add_argument("--model-out", required=True)
    p.add_argument("--log-out", default=None)
    _train_args(p)

    p = sub.add_parser("train-fair", help="train with adversarial mitigation")
    p.add_argument("train_dataset")
    p.add_argument("--model-out", required=True)
    p.add_argument("--log-out", default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--adversary-lr", type=float, default=0.001)
    p.add_argument("--adversary-steps", type=int, default=1)
    _train_args(p)

    p = sub.add_parser("audit", help="per-example sensitivity over a split")
    p.add_argument("model")
    p.add_argument("test_dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--sigma", type=float, default=0.1)
    p.add_argument("--noise-seed", type=int, default=0)
    p.add_argument("--keep-protected-fixed", action="store_true",
                   help="do not perturb the protected column")

    p = sub.add_parser("group-metrics", help="the four group-fairness "
                                             "statistics for a model")
    p.add_argument("model")
    p.add_argument("test_dataset")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out", default=None, help="also write a CSV report")

    p = sub.add_parser("proxy-labels", help="fair/unfair labels by model "
                                            "agreement")
    p.add_argument("unmitigated_model")
    p.add_argument("mitigated_model")
    p.add_argument("test_dataset")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out", required=True)

    p = sub.add_parser("roc", help="ROC of sensitivity as an unfairness "
                                   "classifier")
    p.add_argument("proxy_labels_csv")
    p.add_argument("audit_csv")
    p.add_argument("--score", choices=("plain", "smooth"), default="smooth")
    p.add_argument("--out", required=True)

    p = sub.add_parser("experiment", help="full train/audit/report pipeline")
    p.add_argument("csv")
    _schema_args(p)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--model-kind", choices=("linear", "conv"),
                   default="linear")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--learning-rate", type=float, default=0.001)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--adversary-lr", type=float, default=0.001)
    p.add_argument("--adversary-steps", type=int, default=1)
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--sigma", type=float, default=0.1)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--resume", action="store_true")
    return parser


def _cmd_ingest(args):
    schema = _resolve_schema(args)
    train_ds, test_ds = D.ingest(args.csv, schema, split_seed=args.seed,
                                 test_fraction=args.test_fraction)
    D.save_dataset(train_ds, args.train_out)
    D.save_dataset(test_ds, args.test_out)
    print(f"train rows: {len(train_ds)}  test rows: {len(test_ds)}  "
          f"encoded dim: {train_ds.input_dim}")


def _cmd_train(args, mitigated: bool):
    ds = D.load_dataset(args.train_dataset)
    spec = ModelSpec(kind=args.model_kind, input_dim=ds.input_dim,
                     seed=args.seed)
    model = build(spec)
    mit = None
    if mitigated:
        mit = MitigationConfig(lam=args.lam,
                               adversary_steps_per_main_step=args.adversary_steps,
                               adversary_lr=args.adversary_lr)
    config = TrainConfig(epochs=args.epochs, batch_size=args.batch_size,
                         learning_rate=args.learning_rate, seed=args.seed,
                         mitigation=mit)
    if mitigated:
        adversary = make_adversary(spec, seed=args.seed + 1)
        protected = ds.features[:, ds.protected_index]
        model, logs = train_mitigated(model, adversary, ds.features,
                                      ds.labels, protected, config)
    else:
        model, logs = train(model, ds.features, ds.labels, config)
    save(model, args.model_out)
    if args.log_out:
        write_training_log(logs, args.log_out)
    final = logs[-1].train_loss if logs else float("nan")
    print(f"trained {args.model_kind} for {args.epochs} epochs, "
          f"final loss {final:.4f} -> {args.model_out}")


def _cmd_audit(args):
    model = load(args.model)
    ds = D.load_dataset(args.test_dataset)
    cfg = SensitivityConfig(n_samples=args.n, sigma=args.sigma,
                            noise_seed=args.noise_seed,
                            perturb_protected=not args.keep_protected_fixed)
    results = audit_dataset(model, ds.features, ds.example_ids,
                            ds.protected_index, cfg)
    write_audit_csv(results, args.out, cfg, labels=ds.labels)
    print(f"audited {len(results)} examples -> {args.out}")


def _cmd_group_metrics(args):
    model = load(args.model)
    ds = D.load_dataset(args.test_dataset)
    preds = M.threshold_predictions(predict_batch(model, ds.features),
                                    args.threshold)
    report = M.compute_group_metrics(preds, ds.labels, ds.group)
    sys.stdout.write(report.as_text())
    if args.out:
        M.write_metrics_csv(report, args.out)


def _cmd_proxy_labels(args):
    unmit = load(args.unmitigated_model)
    mit = load(args.mitigated_model)
    ds = D.load_dataset(args.test_dataset)
    labeling = H.build_proxy_labels(unmit, mit, ds, threshold=args.threshold)
    H.write_proxy_labels_csv(labeling, args.out)
    print(f"match: {labeling.match}  not-match: {labeling.not_match}")


def _cmd_roc(args):
    import csv as _csv

    from .errors import DataError
    from .sensitivity import SensitivityResult

    with open(args.proxy_labels_csv, newline="", encoding="utf-8") as fh:
        rows = list(_csv.DictReader(fh))
    ids = np.array([int(r["example-id"]) for r in rows])
    pu = np.array([int(r["prediction-unmitigated"]) for r in rows])
    pm = np.array([int(r["prediction-mitigated"]) for r in rows])
    labels = np.array([r["proxy-label"] for r in rows])
    labeling = H.ProxyLabeling(ids, pu, pm, labels)

    with open(args.audit_csv, newline="", encoding="utf-8") as fh:
        arows = list(_csv.DictReader(fh))
    try:
        audits = [
            SensitivityResult(
                example_id=int(r["example-id"]),
                prediction=float(r["prediction"]),
                plain_sensitivity=float(r["plain-sensitivity"]),
                smooth_sensitivity=float(r["smooth-sensitivity"]))
            for r in arows
        ]
    except (KeyError, ValueError) as exc:
        raise DataError(f"{args.audit_csv}: malformed audit CSV: {exc}") from exc
    curve = H.roc(labeling, audits, score=args.score)
    H.write_roc_csv(curve, args.out)
    print(f"AUC ({args.score}): {curve.auc:.4f}")


def _cmd_experiment(args):
    config = H.ExperimentConfig(
        csv_path=args.csv, out_dir=args.out_dir,
        schema_name=args.schema, schema_path=args.schema_file,
        model_kind=args.model_kind, root_seed=args.seed,
        test_fraction=args.test_fraction, epochs=args.epochs,
        batch_size=args.batch_size, learning_rate=args.learning_rate,
        mitigation_lambda=args.lam, adversary_lr=args.adversary_lr,
        adversary_steps=args.adversary_steps, n_samples=args.n,
        sigma=args.sigma, threshold=args.threshold, resume=args.resume)
    manifest = H.run_experiment(config)
    print(f"experiment complete; {len(manifest['outputs'])} artifacts in "
          f"{args.out_dir}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "ingest":
            _cmd_ingest(args)
        elif args.command == "train":
            _cmd_train(args, mitigated=False)
        elif args.command == "train-fair":
            _cmd_train(args, mitigated=True)
        elif args.command == "audit":
            _cmd_audit(args)
        elif args.command == "group-metrics":
            _cmd_group_metrics(args)
        elif args.command == "proxy-labels":
            _cmd_proxy_labels(args)
        elif args.command == "roc":
            _cmd_roc(args)
        elif args.command == "experiment":
            _cmd_experiment(args)
        return 0
    except FairsenseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
