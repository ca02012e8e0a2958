"""CSV ingestion, sanitization, label encoding and stratified partitioning."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError

NON_FINITE_SPELLINGS = {"", "nan", "inf", "infinity", "+inf", "-inf", "+infinity", "-infinity"}


@dataclass(frozen=True)
class RawTable:
    header: list[str]
    rows: list[list[str]]
    label_column: str

    @property
    def label_index(self) -> int:
        return self.header.index(self.label_column)


@dataclass(frozen=True)
class EncodedDataset:
    """Finite feature matrix plus integer labels; arrays are read-only."""

    features: np.ndarray
    labels: np.ndarray
    class_names: list[str]
    feature_names: list[str]

    def __post_init__(self):
        X = np.array(self.features, dtype=np.float64, copy=True)
        y = np.array(self.labels, dtype=np.intp, copy=True)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise DataError(f"dataset needs n >= 1 and d >= 1, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise DataError("label vector length does not match row count")
        if not np.isfinite(X).all():
            raise DataError("features must be finite")
        if len(set(self.class_names)) != len(self.class_names):
            raise DataError("class names must be distinct")
        if y.size and (y.min() < 0 or y.max() >= len(self.class_names)):
            raise DataError("label id outside 0..K-1")
        if len(self.feature_names) != X.shape[1]:
            raise DataError("feature_names length does not match column count")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "class_names", list(self.class_names))
        object.__setattr__(self, "feature_names", list(self.feature_names))

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    K = n_classes

    @property
    def n_samples(self) -> int:
        return int(self.features.shape[0])

    @property
    def n_features(self) -> int:
        return int(self.features.shape[1])

    def label_strings(self, ids=None) -> list[str]:
        ids = self.labels if ids is None else ids
        return [self.class_names[i] for i in ids]

    def subset(self, idx) -> "EncodedDataset":
        idx = np.asarray(idx, dtype=np.intp)
        return EncodedDataset(self.features[idx], self.labels[idx], self.class_names, self.feature_names)


@dataclass(frozen=True)
class SplitIndices:
    train_idx: np.ndarray
    test_idx: np.ndarray
    test_fraction: float


@dataclass(frozen=True)
class FoldAssignment:
    fold_of: np.ndarray
    k: int

    def train_test(self, fold: int) -> tuple[np.ndarray, np.ndarray]:
        """Positions outside / inside ``fold``."""
        inside = self.fold_of == fold
        return np.flatnonzero(~inside), np.flatnonzero(inside)


@dataclass(frozen=True)
class ClassDistribution:
    counts: np.ndarray
    average: float
    threshold: float


def load_csv(path, label_column: str = "Label") -> RawTable:
    """Read a comma-separated flow table whose first line is the header."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"data file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [name.strip() for name in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file, expected a header line") from None
        seen: dict[str, int] = {}
        for col, name in enumerate(header):
            if name in seen:
                raise DataError(f"{path}: duplicate header {name!r} in columns {seen[name] + 1} and {col + 1}")
            seen[name] = col
        if label_column not in seen:
            raise DataError(f"{path}: label column {label_column!r} not in header")
        rows = []
        for row in reader:
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(
                    f"{path}: line {reader.line_num} has {len(row)} cells, header has {len(header)}"
                )
            rows.append(row)
    if not rows:
        raise DataError(f"{path}: no data rows")
    return RawTable(header, rows, label_column)


def _parse_cell(cell: str, line: int, column: str) -> float:
    text = cell.strip()
    if text.lower() in NON_FINITE_SPELLINGS:
        if text == "" or text.lower() == "nan":
            return math.nan
        return -math.inf if text.startswith("-") else math.inf
    try:
        return float(text)
    except ValueError:
        raise DataError(f"unparseable value {cell!r} at data row {line}, column {column!r}") from None


def impute_column(col: np.ndarray, name: str = "?") -> np.ndarray:
    """NaN -> median of finite values, +/-inf -> finite max/min."""
    finite = np.isfinite(col)
    if not finite.any():
        raise DataError(f"column {name!r} has no finite values")
    if finite.all():
        return col
    vals = col[finite]
    out = col.copy()
    out[np.isnan(col)] = np.median(vals)
    out[col == np.inf] = vals.max()
    out[col == -np.inf] = vals.min()
    return out


def sanitize_encode(table: RawTable) -> EncodedDataset:
    """Parse, impute non-finite cells and map labels in first-appearance order."""
    li = table.label_index
    feature_names = [h for i, h in enumerate(table.header) if i != li]
    if not feature_names:
        raise DataError("table has no feature columns")
    n = len(table.rows)
    X = np.empty((n, len(feature_names)))
    class_ids: dict[str, int] = {}
    y = np.empty(n, dtype=np.intp)
    for r, row in enumerate(table.rows):
        label = row[li].strip()
        y[r] = class_ids.setdefault(label, len(class_ids))
        c = 0
        for i, cell in enumerate(row):
            if i == li:
                continue
            try:
                X[r, c] = float(cell)
            except ValueError:
                X[r, c] = _parse_cell(cell, r + 1, table.header[i])
            c += 1
    for c, name in enumerate(feature_names):
        X[:, c] = impute_column(X[:, c], name)
    return EncodedDataset(X, y, list(class_ids), feature_names)


def _class_positions(labels: np.ndarray):
    for c in np.unique(labels):
        yield int(c), np.flatnonzero(labels == c)


def stratified_split_labels(labels, test_fraction: float, seed: int) -> SplitIndices:
    labels = np.asarray(labels)
    if not 0.0 < test_fraction < 1.0:
        raise DataError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    train, test = [], []
    for c, pos in _class_positions(labels):
        if pos.size < 2:
            raise DataError(f"class {c} has a single sample and cannot be stratified")
        rng = np.random.default_rng([int(seed), c])
        pos = rng.permutation(pos)
        n_test = int(math.floor(test_fraction * pos.size + 0.5))
        n_test = min(max(n_test, 0), pos.size - 1)
        test.append(pos[:n_test])
        train.append(pos[n_test:])
    return SplitIndices(np.sort(np.concatenate(train)), np.sort(np.concatenate(test)), float(test_fraction))


def stratified_split(ds: EncodedDataset, test_fraction: float, seed: int) -> SplitIndices:
    """Per-class shuffled hold-out split; deterministic in ``seed``."""
    return stratified_split_labels(ds.labels, test_fraction, seed)


def stratified_kfold_labels(labels, k: int, seed: int) -> FoldAssignment:
    labels = np.asarray(labels)
    if k < 2:
        raise DataError(f"k must be >= 2, got {k}")
    fold_of = np.empty(labels.shape[0], dtype=np.intp)
    offset = 0
    for c, pos in _class_positions(labels):
        if pos.size < k:
            raise DataError(f"class {c} has {pos.size} samples, fewer than k={k} folds")
        rng = np.random.default_rng([int(seed), c, k])
        pos = rng.permutation(pos)
        fold_of[pos] = (np.arange(pos.size) + offset) % k
        offset = (offset + pos.size) % k
    return FoldAssignment(fold_of, k)


def stratified_kfold(ds: EncodedDataset, k: int, seed: int) -> FoldAssignment:
    """Round-robin fold ids over per-class shuffles; per-class sizes differ by <= 1."""
    return stratified_kfold_labels(ds.labels, k, seed)


def class_distribution_counts(counts) -> ClassDistribution:
    counts = np.asarray(counts, dtype=np.int64)
    average = float(counts.sum()) / counts.size
    return ClassDistribution(counts, average, average / 2.0)


def class_distribution(ds: EncodedDataset, idx) -> ClassDistribution:
    idx = np.asarray(idx, dtype=np.intp)
    if idx.size == 0:
        raise DataError("class_distribution needs a non-empty index list")
    return class_distribution_counts(np.bincount(ds.labels[idx], minlength=ds.n_classes))


def stratified_subsample(labels, max_rows: int | None, seed: int) -> np.ndarray:
    """Sorted positions of a class-proportional subsample of at most about ``max_rows`` rows.

    Returns every position when ``max_rows`` is None or not smaller than n.
    """
    labels = np.asarray(labels)
    n = labels.shape[0]
    if max_rows is None or max_rows >= n:
        return np.arange(n, dtype=np.intp)
    return stratified_split_labels(labels, max_rows / n, seed).test_idx
