"""Datasets: synthetic linear data, CSV ingestion, min-max scaling, splitting.

Bundled CSVs (``linear`` is generated on demand):

* ``wine``     13 features + ``class`` (0/1/2), 178 rows, classification
* ``diabetes`` 10 raw features + ``progression``, 442 rows, regression

The Concrete Compressive Strength data is not bundled; load it with
:func:`load_csv` from a comma-separated export whose 8 ingredient/age columns
come first and the strength column last.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, ContractViolation, IngestionError

REGRESSION = "regression"
CLASSIFICATION = "classification"


@dataclass
class Dataset:
    features: np.ndarray
    targets: np.ndarray
    task: str = REGRESSION
    column_names: list[str] | None = None
    class_labels: list[str] | None = None
    name: str = ""
    meta: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.task not in (REGRESSION, CLASSIFICATION):
            raise ConfigurationError(f"unknown task {self.task!r}")
        self.targets = np.asarray(
            self.targets, dtype=np.int64 if self.task == CLASSIFICATION else np.float64
        )
        if self.features.ndim != 2 or self.features.shape[0] == 0 or self.features.shape[1] == 0:
            raise ContractViolation(f"features must be a nonempty matrix, got {self.features.shape}")
        if self.targets.shape != (self.features.shape[0],):
            raise ContractViolation("one target per row required")

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def is_classification(self) -> bool:
        return self.task == CLASSIFICATION

    @property
    def n_classes(self) -> int | None:
        if not self.is_classification:
            return None
        if self.class_labels is not None:
            return len(self.class_labels)
        return int(self.targets.max()) + 1

    def subset(self, rows=None, columns=None) -> "Dataset":
        """Rows (may repeat) and/or feature columns, keeping metadata."""
        X, y = self.features, self.targets
        names = self.column_names
        if rows is not None:
            rows = np.asarray(rows, dtype=np.int64)
            X, y = X[rows], y[rows]
        if columns is not None:
            columns = np.asarray(columns, dtype=np.int64)
            X = X[:, columns]
            if names is not None:
                names = [names[c] for c in columns]
        return replace(self, features=X, targets=y, column_names=names)


@dataclass
class ScalerParams:
    feature_min: np.ndarray
    feature_max: np.ndarray
    target_min: float | None = None
    target_max: float | None = None


# ---------------------------------------------------------------------------
# generation and ingestion

def generate_linear(n: int = 250, d: int = 5, sigma: float = 0.1, seed=0) -> Dataset:
    """y = w.x + eps with w, x ~ U[-1, 1]^d and eps ~ N(0, sigma^2).

    ``sigma`` is the noise standard deviation.
    """
    if n < 1 or d < 1 or sigma < 0:
        raise ConfigurationError("need n >= 1, d >= 1, sigma >= 0")
    rng = np.random.default_rng(seed)
    w = rng.uniform(-1.0, 1.0, d)
    X = rng.uniform(-1.0, 1.0, (n, d))
    eps = rng.normal(0.0, sigma, n) if sigma > 0 else np.zeros(n)
    return Dataset(X, X @ w + eps, REGRESSION, [f"x{i}" for i in range(d)],
                   name="linear", meta={"weights": w})


@dataclass(frozen=True)
class CsvSchema:
    """Column roles for :func:`load_csv`.

    ``target`` is a column index (negative counts from the end) or a header
    name. ``header=None`` detects a header row by its non-numeric cells.
    """

    target: int | str = -1
    task: str = REGRESSION
    header: bool | None = None
    n_columns: int | None = None


def _parse_float(cell: str, row: int, col: int) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise IngestionError(f"non-numeric cell {cell!r}", row, col) from None
    if not math.isfinite(value):
        raise IngestionError(f"non-finite cell {cell!r}", row, col)
    return value


def _looks_numeric(cell: str) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False


def load_csv(path, schema: CsvSchema = CsvSchema(), name: str | None = None) -> Dataset:
    """Read a comma-separated file. Rows and columns in errors are 1-based."""
    path = Path(path)
    if not path.is_file():
        raise IngestionError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if any(c.strip() for c in r)]
    return _rows_to_dataset(rows, schema, name or path.stem)


def _rows_to_dataset(rows: list[list[str]], schema: CsvSchema, name: str) -> Dataset:
    if not rows:
        raise IngestionError("empty file")
    header = schema.header
    if header is None:
        header = not all(_looks_numeric(c) for c in rows[0])
    names = [c.strip() for c in rows[0]] if header else None
    body = rows[1:] if header else rows
    first_line = 2 if header else 1
    if not body:
        raise IngestionError("no data rows")
    width = len(names) if names else len(body[0])
    if schema.n_columns is not None and width != schema.n_columns:
        raise IngestionError(f"expected {schema.n_columns} columns, found {width}", first_line - 1)

    if isinstance(schema.target, str):
        if not names or schema.target not in names:
            raise IngestionError(f"target column {schema.target!r} not in header")
        target = names.index(schema.target)
    else:
        target = schema.target % width
    feature_cols = [c for c in range(width) if c != target]

    X = np.empty((len(body), len(feature_cols)))
    raw_targets: list[str] = []
    for r, row in enumerate(body):
        line = first_line + r
        if len(row) != width:
            raise IngestionError(f"expected {width} cells, found {len(row)}", line)
        for j, c in enumerate(feature_cols):
            X[r, j] = _parse_float(row[c].strip(), line, c + 1)
        raw_targets.append(row[target].strip())

    if schema.task == CLASSIFICATION:
        labels: dict[str, int] = {}
        y = np.array([labels.setdefault(t, len(labels)) for t in raw_targets], dtype=np.int64)
        class_labels = list(labels)
    else:
        y = np.array([_parse_float(t, first_line + r, target + 1) for r, t in enumerate(raw_targets)])
        class_labels = None
    col_names = [names[c] for c in feature_cols] if names else None
    return Dataset(X, y, schema.task, col_names, class_labels, name)


BUILTIN = {
    "wine": CsvSchema(target="class", task=CLASSIFICATION, header=True, n_columns=14),
    "diabetes": CsvSchema(target="progression", task=REGRESSION, header=True, n_columns=11),
}


def load_builtin(name: str, seed=0) -> Dataset:
    """``linear`` (generated from ``seed``), ``wine`` or ``diabetes``."""
    if name == "linear":
        return generate_linear(250, 5, 0.1, seed)
    if name not in BUILTIN:
        raise ConfigurationError(f"unknown builtin dataset {name!r}; choose linear, wine, diabetes")
    with resources.as_file(resources.files("qensemble.datasets") / f"{name}.csv") as p:
        return load_csv(p, BUILTIN[name], name)


def export_csv(dataset: Dataset, path) -> None:
    names = dataset.column_names or [f"x{i}" for i in range(dataset.n_features)]
    target_name = "class" if dataset.is_classification else "target"
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(list(names) + [target_name])
        for x, y in zip(dataset.features, dataset.targets):
            label = dataset.class_labels[y] if dataset.class_labels else y
            w.writerow([repr(float(v)) for v in x] + [label if dataset.is_classification else repr(float(y))])


# ---------------------------------------------------------------------------
# scaling and splitting

def fit_scaler(train: Dataset) -> ScalerParams:
    if len(train) == 0:
        raise ContractViolation("cannot fit a scaler on an empty dataset")
    params = ScalerParams(train.features.min(axis=0), train.features.max(axis=0))
    if not train.is_classification:
        params.target_min = float(train.targets.min())
        params.target_max = float(train.targets.max())
    return params


def _scale(values: np.ndarray, lo, hi) -> np.ndarray:
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    span = hi - lo
    safe = np.where(span > 0, span, 1.0)
    out = np.where(span > 0, 2.0 * (values - lo) / safe - 1.0, 0.0)
    return np.clip(out, -1.0, 1.0)


def apply_scaler(data: Dataset, params: ScalerParams) -> Dataset:
    """Affine map onto [-1, 1] with train statistics; out-of-range values clamp."""
    X = _scale(data.features, params.feature_min, params.feature_max)
    y = data.targets
    if not data.is_classification and params.target_min is not None:
        y = _scale(y, params.target_min, params.target_max)
    return replace(data, features=X, targets=y)


def inverse_transform_targets(y, params: ScalerParams) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    span = params.target_max - params.target_min
    if span == 0:
        return np.full_like(y, params.target_min)
    return (y + 1.0) * span / 2.0 + params.target_min


def inverse_transform_features(X, params: ScalerParams) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    span = params.feature_max - params.feature_min
    return np.where(span > 0, (X + 1.0) * span / 2.0 + params.feature_min, params.feature_min)


def train_test_split(data: Dataset, train_fraction: float = 0.8, seed=0) -> tuple[Dataset, Dataset]:
    """Shuffled split with ``floor(train_fraction * N)`` training rows."""
    n = len(data)
    if n < 5:
        raise ContractViolation("need at least 5 rows to split")
    if not 0 < train_fraction < 1:
        raise ConfigurationError("train_fraction must be in (0, 1)")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(math.floor(train_fraction * n + 1e-9))
    return data.subset(rows=perm[:n_train]), data.subset(rows=perm[n_train:])


@dataclass
class PreparedData:
    train: Dataset
    test: Dataset
    scaler: ScalerParams
    raw: Dataset = field(repr=False)


def prepare(data: Dataset, seed=0, train_fraction: float = 0.8) -> PreparedData:
    """Split, then scale both parts with statistics from the training rows only."""
    train_raw, test_raw = train_test_split(data, train_fraction, seed)
    scaler = fit_scaler(train_raw)
    return PreparedData(apply_scaler(train_raw, scaler), apply_scaler(test_raw, scaler), scaler, data)
