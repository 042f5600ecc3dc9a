"""Dataset loading and feature scaling."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, DimensionMismatchError

FLOAT_FORMAT = "%.17g"


@dataclass
class Scaler:
    """Per-dimension min/max transform to the unit cube.

    Fitted on training data only and frozen afterwards; test points outside
    the training range map outside [0, 1], which is what drives extrapolation
    uncertainty. Dimensions with zero training range map to the constant 0.5.
    """

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=np.float64)
        self.upper = np.asarray(self.upper, dtype=np.float64)

    @classmethod
    def fit(cls, features) -> "Scaler":
        features = np.asarray(features, dtype=np.float64)
        return cls(features.min(axis=0), features.max(axis=0))

    @property
    def dim(self) -> int:
        return self.lower.size

    def transform(self, features) -> np.ndarray:
        features = np.atleast_2d(np.asarray(features, dtype=np.float64))
        if features.shape[1] != self.dim:
            raise DimensionMismatchError(
                f"features have {features.shape[1]} columns, scaler expects {self.dim}"
            )
        span = self.upper - self.lower
        degenerate = span <= 0.0
        safe = np.where(degenerate, 1.0, span)
        out = (features - self.lower) / safe
        out[:, degenerate] = 0.5
        return out

    def inverse(self, scaled) -> np.ndarray:
        scaled = np.atleast_2d(np.asarray(scaled, dtype=np.float64))
        if scaled.shape[1] != self.dim:
            raise DimensionMismatchError(
                f"features have {scaled.shape[1]} columns, scaler expects {self.dim}"
            )
        span = self.upper - self.lower
        out = self.lower + scaled * np.where(span <= 0.0, 0.0, span)
        return out


def scale_features(features, scaler: Scaler) -> np.ndarray:
    return scaler.transform(features)


@dataclass
class DatasetSpec:
    path: str
    label: str | int | None = None  # column name, index, or None (last column)
    delimiter: str = ","
    header: bool = True


@dataclass
class TrainingSlice:
    features: np.ndarray
    labels: np.ndarray
    feature_names: list[str] = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


def _parse_cell(cell: str, row: int, col: int) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise DataError(f"non-numeric cell at row {row}, column {col}: {cell!r}") from None
    if not math.isfinite(value):
        raise DataError(f"non-finite cell at row {row}, column {col}: {cell!r}")
    return value


def load_csv(spec: DatasetSpec) -> TrainingSlice:
    """Load a delimited numeric dataset into features and labels.

    Row/column numbers in diagnostics are 1-based file coordinates.
    """
    path = Path(spec.path)
    if not path.exists():
        raise DataError(f"dataset file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=spec.delimiter)
        rows = list(reader)
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"dataset is empty: {path}")

    names: list[str] = []
    start = 0
    if spec.header:
        names = [c.strip() for c in rows[0]]
        start = 1
    if start >= len(rows):
        raise DataError(f"dataset has a header but no data rows: {path}")
    width = len(rows[start])

    label_col: int | None
    if spec.label is None:
        label_col = width - 1
    elif isinstance(spec.label, int) or (isinstance(spec.label, str) and spec.label.lstrip("-").isdigit()):
        label_col = int(spec.label)
        if label_col < 0:
            label_col += width
        if not 0 <= label_col < width:
            raise DataError(f"label column index {spec.label} out of range for {width} columns")
    else:
        if spec.label not in names:
            raise DataError(f"label column {spec.label!r} not found in header {names}")
        label_col = names.index(spec.label)

    features = []
    labels = []
    for i, row in enumerate(rows[start:], start=start + 1):
        if len(row) != width:
            raise DataError(f"row {i} has {len(row)} cells, expected {width}")
        values = [_parse_cell(c, i, j + 1) for j, c in enumerate(row)]
        labels.append(values[label_col])
        features.append([v for j, v in enumerate(values) if j != label_col])
    feature_names = [n for j, n in enumerate(names) if j != label_col] if names else []
    return TrainingSlice(
        np.asarray(features, dtype=np.float64),
        np.asarray(labels, dtype=np.float64),
        feature_names,
    )


def load_feature_csv(spec: DatasetSpec) -> TrainingSlice:
    """Load a delimited file where every column is a feature (no labels)."""
    path = Path(spec.path)
    if not path.exists():
        raise DataError(f"dataset file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=spec.delimiter)
        rows = [r for r in reader if r and any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"dataset is empty: {path}")
    names = []
    start = 0
    if spec.header:
        names = [c.strip() for c in rows[0]]
        start = 1
    if start >= len(rows):
        raise DataError(f"dataset has a header but no data rows: {path}")
    width = len(rows[start])
    features = []
    for i, row in enumerate(rows[start:], start=start + 1):
        if len(row) != width:
            raise DataError(f"row {i} has {len(row)} cells, expected {width}")
        features.append([_parse_cell(c, i, j + 1) for j, c in enumerate(row)])
    return TrainingSlice(
        np.asarray(features, dtype=np.float64),
        np.zeros(len(features)),
        names,
    )


def write_csv(path, header, rows, delimiter=","):
    """Write rows of floats with full round-trip precision."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, delimiter=delimiter)
        if header:
            writer.writerow(header)
        for row in rows:
            writer.writerow([FLOAT_FORMAT % v if isinstance(v, float) else v for v in row])
