"""Load, clean, encode, normalize, and split tabular datasets.

Cleaning drops rows with missing values (configurable markers), except for
columns explicitly listed in ``keep_missing_as_category`` where the marker
becomes an ordinary category. Categorical columns are one-hot encoded in
full (no reference category dropped) so every encoded column maps back to
one attribute value; the protected column is binarized to {0,1} with 1 for
the privileged value. Numeric columns are z-scored with train-split
statistics only; zero-variance columns are dropped with a warning.

Built-in schemas cover the Adult census income data (headerless
``adult.data`` file) and the COMPAS two-year recidivism file with the
published filter rules.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import (
    CorruptFileError,
    DataError,
    SchemaError,
    StatsMismatchError,
    VersionError,
)
from .rngs import substream

log = logging.getLogger(__name__)

DATASET_FORMAT_VERSION = 1

COLUMN_KINDS = ("numeric", "categorical", "label", "protected")
FILTER_OPS = ("ge", "le", "ne", "eq")


@dataclass(frozen=True)
class RowFilter:
    column: str
    op: str  # ge/le compare numerically, ne/eq compare as strings
    value: str

    def __post_init__(self):
        if self.op not in FILTER_OPS:
            raise SchemaError(f"unknown filter op {self.op!r}")


@dataclass(frozen=True)
class DatasetSchema:
    name: str
    columns: tuple[tuple[str, str], ...]  # (column name, kind) in file order
    privileged_value: str
    positive_label_value: str
    header: bool = True
    missing_markers: tuple[str, ...] = ("?", "")
    keep_missing_as_category: tuple[str, ...] = ()
    filters: tuple[RowFilter, ...] = ()

    def __post_init__(self):
        kinds = [k for _, k in self.columns]
        for k in kinds:
            if k not in COLUMN_KINDS:
                raise SchemaError(f"unknown column kind {k!r}")
        if kinds.count("label") != 1:
            raise SchemaError("schema must designate exactly one label column")
        if kinds.count("protected") != 1:
            raise SchemaError(
                "schema must designate exactly one protected column")

    @property
    def label_column(self) -> str:
        return next(n for n, k in self.columns if k == "label")

    @property
    def protected_column(self) -> str:
        return next(n for n, k in self.columns if k == "protected")

    @property
    def feature_columns(self) -> list[tuple[str, str]]:
        return [(n, k) for n, k in self.columns if k in
                ("numeric", "categorical", "protected")]

    def fingerprint(self) -> str:
        blob = json.dumps(_schema_doc(self), sort_keys=True)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


@dataclass
class NormStats:
    """Train-split z-score statistics for the numeric encoded columns."""
    indices: list[int]
    means: list[float]
    stds: list[float]
    width: int
    schema_fingerprint: str


@dataclass
class Dataset:
    features: np.ndarray  # rows x input_dim, normalized, float64
    labels: np.ndarray  # 0/1 ints
    group: np.ndarray  # 1 = privileged
    protected_index: int
    split: str  # "train" or "test"
    example_ids: np.ndarray  # original CSV row indices
    column_names: list[str]
    stats: NormStats
    schema_fingerprint: str

    @property
    def input_dim(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return len(self.features)


# ---------------------------------------------------------------------------
# built-in schemas

ADULT_COLUMNS = (
    "age", "workclass", "fnlwgt", "education", "education-num",
    "marital-status", "occupation", "relationship", "race", "sex",
    "capital-gain", "capital-loss", "hours-per-week", "native-country",
    "income",
)
ADULT_NUMERIC = {"age", "fnlwgt", "education-num", "capital-gain",
                 "capital-loss", "hours-per-week"}


def adult_schema(protected: str = "sex") -> DatasetSchema:
    """Adult census income, headerless UCI ``adult.data`` layout.

    Rows with an unreported workclass or occupation are dropped; an
    unreported native country is kept as its own category.
    """
    if protected not in ("sex", "race"):
        raise SchemaError("Adult protected attribute must be 'sex' or 'race'")
    privileged = "Male" if protected == "sex" else "White"
    columns = []
    for name in ADULT_COLUMNS:
        if name == "income":
            kind = "label"
        elif name == protected:
            kind = "protected"
        elif name in ADULT_NUMERIC:
            kind = "numeric"
        else:
            kind = "categorical"
        columns.append((name, kind))
    return DatasetSchema(
        name=f"adult-{protected}",
        columns=tuple(columns),
        privileged_value=privileged,
        positive_label_value=">50K",
        header=False,
        keep_missing_as_category=("native-country",),
    )


COMPAS_FEATURES = (
    ("sex", "categorical"),
    ("age", "numeric"),
    ("age_cat", "categorical"),
    ("race", "protected"),
    ("juv_fel_count", "numeric"),
    ("juv_misd_count", "numeric"),
    ("juv_other_count", "numeric"),
    ("priors_count", "numeric"),
    ("c_charge_degree", "categorical"),
    ("two_year_recid", "label"),
)


def compas_schema() -> DatasetSchema:
    """ProPublica COMPAS two-year file with the published filter rules."""
    return DatasetSchema(
        name="compas-race",
        columns=COMPAS_FEATURES,
        privileged_value="Caucasian",
        positive_label_value="1",
        header=True,
        filters=(
            RowFilter("days_b_screening_arrest", "ge", "-30"),
            RowFilter("days_b_screening_arrest", "le", "30"),
            RowFilter("is_recid", "ne", "-1"),
            RowFilter("c_charge_degree", "ne", "O"),
            RowFilter("score_text", "ne", "N/A"),
        ),
    )


BUILTIN_SCHEMAS = {
    "adult-sex": lambda: adult_schema("sex"),
    "adult-race": lambda: adult_schema("race"),
    "compas-race": compas_schema,
}


# ---------------------------------------------------------------------------
# schema files


def _schema_doc(schema: DatasetSchema) -> dict:
    return {
        "name": schema.name,
        "columns": [{"name": n, "kind": k} for n, k in schema.columns],
        "privileged-value": schema.privileged_value,
        "positive-label-value": schema.positive_label_value,
        "header": schema.header,
        "missing-markers": list(schema.missing_markers),
        "keep-missing-as-category": list(schema.keep_missing_as_category),
        "filters": [{"column": f.column, "op": f.op, "value": f.value}
                    for f in schema.filters],
    }


def save_schema(schema: DatasetSchema, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_schema_doc(schema), fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_schema(path) -> DatasetSchema:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: not a valid schema file: {exc}") from exc
    try:
        return DatasetSchema(
            name=doc["name"],
            columns=tuple((c["name"], c["kind"]) for c in doc["columns"]),
            privileged_value=doc["privileged-value"],
            positive_label_value=doc["positive-label-value"],
            header=doc.get("header", True),
            missing_markers=tuple(doc.get("missing-markers", ("?", ""))),
            keep_missing_as_category=tuple(
                doc.get("keep-missing-as-category", ())),
            filters=tuple(RowFilter(f["column"], f["op"], f["value"])
                          for f in doc.get("filters", ())),
        )
    except KeyError as exc:
        raise SchemaError(f"{path}: schema file missing key {exc}") from exc


# ---------------------------------------------------------------------------
# ingestion


def clean_dataframe(csv_path, schema: DatasetSchema) -> pd.DataFrame:
    """Parse, strip, filter, and drop incomplete rows. Index = CSV row."""
    try:
        if schema.header:
            df = pd.read_csv(csv_path, dtype=str, skipinitialspace=True)
        else:
            df = pd.read_csv(csv_path, dtype=str, skipinitialspace=True,
                             header=None, names=[n for n, _ in schema.columns])
    except (pd.errors.ParserError, FileNotFoundError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot parse {csv_path}: {exc}") from exc

    needed = {n for n, _ in schema.columns} | {f.column for f in schema.filters}
    missing = sorted(needed - set(df.columns))
    if missing:
        raise SchemaError(
            f"{csv_path}: schema columns not found in CSV: {missing}")

    for col in needed:
        df[col] = df[col].astype(str).str.strip()

    for f in schema.filters:
        col = df[f.column]
        if f.op in ("ge", "le"):
            num = pd.to_numeric(col, errors="coerce")
            bound = float(f.value)
            mask = (num >= bound) if f.op == "ge" else (num <= bound)
            mask = mask.fillna(False)
        elif f.op == "ne":
            mask = (col != f.value) & ~col.isin(("nan", "<NA>"))
        else:
            mask = col == f.value
        df = df[mask]

    markers = set(schema.missing_markers) | {"nan", "<NA>"}
    for name, _ in schema.columns:
        if name in schema.keep_missing_as_category:
            df.loc[df[name].isin(markers), name] = "Unknown"
    keep = ~df[[n for n, _ in schema.columns]].isin(markers).any(axis=1)
    df = df[keep]
    if df.empty:
        raise DataError(f"{csv_path}: no rows left after cleaning")
    return df


def encode(df: pd.DataFrame, schema: DatasetSchema):
    """Numeric matrix, labels, group flags, protected index, column names."""
    blocks: list[np.ndarray] = []
    names: list[str] = []
    protected_index = None
    for name, kind in schema.feature_columns:
        if kind == "numeric":
            col = pd.to_numeric(df[name], errors="coerce")
            if col.isna().any():
                raise DataError(f"column {name!r} has non-numeric values")
            blocks.append(col.to_numpy(dtype=np.float64).reshape(-1, 1))
            names.append(name)
        elif kind == "protected":
            protected_index = len(names)
            flag = (df[name] == schema.privileged_value
                    ).to_numpy(dtype=np.float64).reshape(-1, 1)
            blocks.append(flag)
            names.append(f"{name}={schema.privileged_value}")
        else:
            values = sorted(df[name].unique())
            onehot = np.zeros((len(df), len(values)))
            for j, v in enumerate(values):
                onehot[:, j] = (df[name] == v).astype(np.float64)
            blocks.append(onehot)
            names.extend(f"{name}={v}" for v in values)
    features = np.hstack(blocks)
    labels = (df[schema.label_column] == schema.positive_label_value
              ).to_numpy(dtype=int)
    group = features[:, protected_index].astype(int)
    return features, labels, group, protected_index, names


def ingest(csv_path, schema: DatasetSchema, split_seed: int = 0,
           test_fraction: float = 0.2) -> tuple[Dataset, Dataset]:
    """Clean + encode + deterministic split + train-stat normalization."""
    if not 0.0 < test_fraction < 1.0:
        raise DataError("test_fraction must be in (0, 1)")
    df = clean_dataframe(csv_path, schema)
    features, labels, group, protected_index, names = encode(df, schema)
    example_ids = df.index.to_numpy()

    n = len(features)
    perm = substream(split_seed, "split").permutation(n)
    n_test = int(round(test_fraction * n))
    if n_test == 0 or n_test == n:
        raise DataError("test fraction leaves an empty split")
    test_rows = np.sort(perm[:n_test])
    train_rows = np.sort(perm[n_test:])

    numeric_names = {nm for nm, k in schema.feature_columns if k == "numeric"}
    numeric_idx = [i for i, nm in enumerate(names) if nm in numeric_names]
    train_feat = features[train_rows]
    keep_idx, means, stds, kept_numeric = [], [], [], []
    drop = set()
    for i in numeric_idx:
        std = float(train_feat[:, i].std())
        if std == 0.0:
            log.warning("dropping zero-variance column %r", names[i])
            drop.add(i)
        else:
            means.append(float(train_feat[:, i].mean()))
            stds.append(std)
            kept_numeric.append(i)
    keep_cols = [i for i in range(features.shape[1]) if i not in drop]
    remap = {old: new for new, old in enumerate(keep_cols)}
    fingerprint = schema.fingerprint()
    stats = NormStats(
        indices=[remap[i] for i in kept_numeric],
        means=means, stds=stds,
        width=len(keep_cols),
        schema_fingerprint=fingerprint,
    )
    features = features[:, keep_cols]
    names = [names[i] for i in keep_cols]
    protected_index = remap[protected_index]

    def make_split(rows, tag):
        feats = features[rows].copy()
        for j, mean, std in zip(stats.indices, stats.means, stats.stds):
            feats[:, j] = (feats[:, j] - mean) / std
        return Dataset(
            features=feats, labels=labels[rows], group=group[rows],
            protected_index=protected_index, split=tag,
            example_ids=example_ids[rows], column_names=list(names),
            stats=stats, schema_fingerprint=fingerprint,
        )

    return make_split(train_rows, "train"), make_split(test_rows, "test")


def normalize_apply(stats: NormStats, x: np.ndarray,
                    schema_fingerprint: str | None = None) -> np.ndarray:
    if schema_fingerprint is not None and \
            schema_fingerprint != stats.schema_fingerprint:
        raise StatsMismatchError(
            "normalization stats come from a different schema")
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != stats.width:
        raise StatsMismatchError(
            f"vector width {x.shape[-1]} != stats width {stats.width}")
    out = x.copy()
    for j, mean, std in zip(stats.indices, stats.means, stats.stds):
        out[..., j] = (out[..., j] - mean) / std
    return out


def normalize_invert(stats: NormStats, x: np.ndarray,
                     schema_fingerprint: str | None = None) -> np.ndarray:
    if schema_fingerprint is not None and \
            schema_fingerprint != stats.schema_fingerprint:
        raise StatsMismatchError(
            "normalization stats come from a different schema")
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != stats.width:
        raise StatsMismatchError(
            f"vector width {x.shape[-1]} != stats width {stats.width}")
    out = x.copy()
    for j, mean, std in zip(stats.indices, stats.means, stats.stds):
        out[..., j] = out[..., j] * std + mean
    return out


# ---------------------------------------------------------------------------
# dataset cache files (same versioned text family as model files)


def save_dataset(ds: Dataset, path) -> None:
    doc = {
        "format-version": DATASET_FORMAT_VERSION,
        "split": ds.split,
        "protected-index": ds.protected_index,
        "column-names": ds.column_names,
        "schema-fingerprint": ds.schema_fingerprint,
        "example-ids": ds.example_ids.tolist(),
        "labels": ds.labels.tolist(),
        "group": ds.group.tolist(),
        "features": ds.features.reshape(-1).tolist(),
        "stats": {
            "indices": ds.stats.indices,
            "means": ds.stats.means,
            "stds": ds.stats.stds,
            "width": ds.stats.width,
            "schema-fingerprint": ds.stats.schema_fingerprint,
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(doc, sort_keys=True, indent=1) + "\n")


def load_dataset(path) -> Dataset:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CorruptFileError(
                f"{path}: not a valid dataset file: {exc}") from exc
    if doc.get("format-version") != DATASET_FORMAT_VERSION:
        raise VersionError(
            f"{path}: unknown dataset format version "
            f"{doc.get('format-version')!r}")
    names = doc["column-names"]
    n = len(doc["labels"])
    stats_doc = doc["stats"]
    stats = NormStats(indices=stats_doc["indices"], means=stats_doc["means"],
                      stds=stats_doc["stds"], width=stats_doc["width"],
                      schema_fingerprint=stats_doc["schema-fingerprint"])
    features = np.asarray(doc["features"], dtype=np.float64)
    if features.size != n * len(names):
        raise CorruptFileError(f"{path}: feature matrix size mismatch")
    return Dataset(
        features=features.reshape(n, len(names)),
        labels=np.asarray(doc["labels"], dtype=int),
        group=np.asarray(doc["group"], dtype=int),
        protected_index=doc["protected-index"],
        split=doc["split"],
        example_ids=np.asarray(doc["example-ids"], dtype=int),
        column_names=list(names),
        stats=stats,
        schema_fingerprint=doc["schema-fingerprint"],
    )
