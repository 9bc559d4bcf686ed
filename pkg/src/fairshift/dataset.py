"""Tabular dataset container and CSV ingestion.

A Dataset is a feature matrix with named columns, a binary label vector
(1 = positive outcome), and a binary sensitive vector (0 = protected).
Column metadata carries the empirical mean and population standard
deviation, which the shift engine uses to scale perturbations.
"""

import json
from dataclasses import dataclass, replace

import numpy as np
import pandas as pd

KIND_NUMERIC = "numeric"
KIND_BINARY = "binary"

ROLES = ("feature", "label", "sensitive", "drop")


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class ColumnMeta:
    name: str
    kind: str
    mean: float
    std_dev: float


@dataclass
class Dataset:
    features: np.ndarray      # (n, d) float64
    labels: np.ndarray        # (n,) int8 in {0,1}, 1 = positive outcome
    sensitive: np.ndarray     # (n,) int8 in {0,1}, 0 = protected
    column_meta: list

    @property
    def n_rows(self):
        return self.features.shape[0]

    @property
    def n_cols(self):
        return self.features.shape[1]

    @property
    def column_names(self):
        return [m.name for m in self.column_meta]

    def column_index(self, name):
        try:
            return self.column_names.index(name)
        except ValueError:
            raise DatasetError(f"unknown column {name!r}") from None

    def column(self, name):
        return self.features[:, self.column_index(name)]

    def meta(self, name):
        return self.column_meta[self.column_index(name)]

    def take(self, idx):
        """Row subset as a new Dataset (column_meta recomputed)."""
        idx = np.asarray(idx)
        return make_dataset(self.features[idx], self.labels[idx],
                            self.sensitive[idx], self.column_names)

    def with_features(self, features):
        """Same rows/labels/sensitive, new feature values (meta recomputed)."""
        return make_dataset(features, self.labels, self.sensitive,
                            self.column_names)


@dataclass
class TaskCollection:
    tasks: list  # of (task_id, Dataset)

    def __post_init__(self):
        ids = [t or "" for t, _ in self.tasks]
        if len(set(ids)) != len(ids):
            raise DatasetError("duplicate task ids")

    def __len__(self):
        return len(self.tasks)

    def __iter__(self):
        return iter(self.tasks)

    def ids(self):
        return [t for t, _ in self.tasks]

    def get(self, task_id):
        for t, ds in self.tasks:
            if t == task_id:
                return ds
        raise DatasetError(f"unknown task {task_id!r}")

    def subset(self, ids):
        ids = list(ids)
        return TaskCollection([(t, self.get(t)) for t in ids])


def column_stats(values):
    """(mean, population standard deviation)."""
    return float(np.mean(values)), float(np.std(values))


def infer_kind(values):
    return KIND_BINARY if np.isin(values, (0.0, 1.0)).all() else KIND_NUMERIC


def make_dataset(features, labels, sensitive, names):
    features = np.ascontiguousarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int8)
    sensitive = np.asarray(sensitive, dtype=np.int8)
    if features.ndim != 2:
        raise DatasetError("features must be a 2-d matrix")
    if len(names) != features.shape[1]:
        raise DatasetError("one name per feature column required")
    meta = []
    for j, name in enumerate(names):
        col = features[:, j]
        mean, std = column_stats(col)
        meta.append(ColumnMeta(str(name), infer_kind(col), mean, std))
    ds = Dataset(features, labels, sensitive, meta)
    validate_dataset(ds)
    return ds


def validate_dataset(ds):
    """Raise DatasetError unless all Dataset invariants hold."""
    n = ds.features.shape[0]
    if n < 1:
        raise DatasetError("dataset has zero rows")
    if ds.labels.shape != (n,) or ds.sensitive.shape != (n,):
        raise DatasetError("row counts of features/labels/sensitive disagree")
    if not np.isfinite(ds.features).all():
        raise DatasetError("non-finite feature values")
    if not np.isin(ds.labels, (0, 1)).all():
        raise DatasetError("non-binary label")
    if not np.isin(ds.sensitive, (0, 1)).all():
        raise DatasetError("non-binary sensitive value")
    if len(ds.column_meta) != ds.features.shape[1]:
        raise DatasetError("column metadata length mismatch")
    for j, m in enumerate(ds.column_meta):
        col = ds.features[:, j]
        if m.kind not in (KIND_NUMERIC, KIND_BINARY):
            raise DatasetError(f"column {m.name!r}: unknown kind {m.kind!r}")
        if m.kind == KIND_BINARY and not np.isin(col, (0.0, 1.0)).all():
            raise DatasetError(f"column {m.name!r}: binary kind with non-0/1 values")
        mean, std = column_stats(col)
        if abs(mean - m.mean) > 1e-9 or abs(std - m.std_dev) > 1e-9:
            raise DatasetError(f"column {m.name!r}: stale mean/std metadata")
        if m.std_dev < 0:
            raise DatasetError(f"column {m.name!r}: negative std_dev")


def load_schema(path):
    with open(path, encoding="utf-8") as fh:
        schema = json.load(fh)
    for col, role in schema.items():
        if role not in ROLES:
            raise DatasetError(f"schema column {col!r}: unknown role {role!r}")
    return schema


def load_csv(path, schema):
    """Read a header CSV and assemble a Dataset according to column roles.

    schema maps column name -> one of {feature,label,sensitive,drop}.
    Exactly one label and one sensitive column must be designated.
    """
    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False)
    except FileNotFoundError:
        raise DatasetError(f"missing file: {path}") from None
    if raw.shape[0] == 0:
        raise DatasetError(f"{path}: zero data rows")

    labels_cols = [c for c, r in schema.items() if r == "label"]
    sens_cols = [c for c, r in schema.items() if r == "sensitive"]
    feature_cols = [c for c, r in schema.items() if r == "feature"]
    if len(labels_cols) != 1 or len(sens_cols) != 1:
        raise DatasetError("schema must designate exactly one label and one "
                           "sensitive column")
    for col in labels_cols + sens_cols + feature_cols:
        if col not in raw.columns:
            raise DatasetError(f"missing designated column {col!r}")

    def parse(col):
        values = np.empty(raw.shape[0], dtype=np.float64)
        for i, cell in enumerate(raw[col].to_numpy()):
            try:
                values[i] = float(cell)
            except ValueError:
                raise DatasetError(
                    f"unparseable cell at row {i + 1}, column {col!r}: "
                    f"{cell!r}") from None
        return values

    labels = parse(labels_cols[0])
    if not np.isin(labels, (0.0, 1.0)).all():
        raise DatasetError(f"non-binary label in column {labels_cols[0]!r}")
    sensitive = parse(sens_cols[0])
    if not np.isin(sensitive, (0.0, 1.0)).all():
        raise DatasetError(f"non-binary sensitive value in column {sens_cols[0]!r}")
    features = np.column_stack([parse(c) for c in feature_cols]) \
        if feature_cols else np.empty((raw.shape[0], 0))
    return make_dataset(features, labels.astype(np.int8),
                        sensitive.astype(np.int8), feature_cols)


def save_csv(ds, path, label_name="label", sensitive_name="sensitive"):
    frame = pd.DataFrame(ds.features, columns=ds.column_names)
    frame[label_name] = ds.labels
    frame[sensitive_name] = ds.sensitive
    frame.to_csv(path, index=False)


def split(ds, fraction, seed):
    """Disjoint (rest, test) row partition; test gets round(fraction * n).

    Deterministic in the seed; column metadata is recomputed per part.
    """
    n = ds.n_rows
    if not 0.0 < fraction < 1.0:
        raise DatasetError(f"fraction must be in (0, 1), got {fraction}")
    n_test = int(np.floor(fraction * n + 0.5))
    n_test = max(n_test, 1)
    if n - n_test < 1:
        raise DatasetError(f"degenerate fraction {fraction} for {n} rows")
    perm = np.random.default_rng(seed).permutation(n)
    test_idx = np.sort(perm[:n_test])
    rest_idx = np.sort(perm[n_test:])
    return ds.take(rest_idx), ds.take(test_idx)
