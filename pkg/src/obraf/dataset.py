"""Tabular datasets: CSV ingestion, z-scoring, bootstrap bags and stratified folds."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np


class DataError(ValueError):
    """Raised for malformed or unusable input data."""


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    feature_names: list[str] | None = None
    class_names: list[str] | None = None
    name: str = ""

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        y = np.asarray(self.labels, dtype=np.intp)
        if X.ndim != 2:
            raise DataError(f"features must be 2-D, got shape {X.shape}")
        if len(y) != X.shape[0]:
            raise DataError(f"{X.shape[0]} feature rows but {len(y)} labels")
        if not np.all(np.isfinite(X)):
            raise DataError("features contain non-finite values")
        if len(y) and (y.min() < 0 or y.max() >= self.num_classes):
            raise DataError(f"labels must lie in [0, {self.num_classes})")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def subset(self, indices) -> Dataset:
        idx = np.asarray(indices, dtype=np.intp)
        return replace(self, features=self.features[idx], labels=self.labels[idx])


@dataclass(frozen=True)
class NormalizationParams:
    means: np.ndarray
    scales: np.ndarray
    mode: str = "std"

    def to_dict(self) -> dict:
        return {"means": self.means.tolist(), "scales": self.scales.tolist(), "mode": self.mode}

    @classmethod
    def from_dict(cls, d: dict) -> NormalizationParams:
        return cls(np.asarray(d["means"], dtype=float), np.asarray(d["scales"], dtype=float),
                   d.get("mode", "std"))


@dataclass(frozen=True)
class BagSample:
    indices: np.ndarray
    oob_indices: np.ndarray = field(repr=False)


def _parse_float(cell: str) -> float | None:
    try:
        return float(cell)
    except ValueError:
        return None


def load_csv(path, label_column: int | str = -1, name: str | None = None) -> Dataset:
    """Read a comma-separated file into a :class:`Dataset`.

    A header row is assumed iff some feature cell of the first row does not
    parse as a number (always, when the label column is given by name).
    ``label_column`` is a column name or an index;
    negative indices count from the end. Labels are re-encoded to contiguous
    ids in order of first appearance; the original strings are kept in
    ``class_names``.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"{path}: empty file")

    first = [c.strip() for c in rows[0]]
    width = len(first)
    if isinstance(label_column, str):
        if label_column not in first:
            raise DataError(f"{path}: no column named {label_column!r} (a named label column needs a header)")
        label_idx = first.index(label_column)
        header = first
    else:
        label_idx = label_column + width if label_column < 0 else label_column
        if not 0 <= label_idx < width:
            raise DataError(f"{path}: label column index {label_column} out of range for {width} columns")
        # text labels are normal, so only feature cells decide whether row 1 is a header
        feature_cells = [c for j, c in enumerate(first) if j != label_idx]
        header = first if any(_parse_float(c) is None for c in feature_cells) else None
    body = rows[1:] if header else rows
    if not body:
        raise DataError(f"{path}: no data rows")

    line0 = 2 if header else 1
    X = np.empty((len(body), width - 1))
    raw_labels = []
    for i, row in enumerate(body):
        if len(row) != width:
            raise DataError(f"{path}: line {line0 + i} has {len(row)} fields, expected {width}")
        col = 0
        for j, cell in enumerate(row):
            if j == label_idx:
                raw_labels.append(cell.strip())
                continue
            v = _parse_float(cell)
            if v is None or not np.isfinite(v):
                colname = header[j] if header else str(j)
                raise DataError(f"{path}: line {line0 + i}, column {colname!r}: cannot parse {cell!r} as a number")
            X[i, col] = v
            col += 1

    mapping: dict[str, int] = {}
    y = np.array([mapping.setdefault(lab, len(mapping)) for lab in raw_labels], dtype=np.intp)
    if len(mapping) < 2:
        raise DataError(f"{path}: only one class present; multi-class data required")

    names = [h for j, h in enumerate(header) if j != label_idx] if header else None
    return Dataset(X, y, len(mapping), feature_names=names, class_names=list(mapping),
                   name=name or path.stem)


def fit_normalizer(data: Dataset, mode: str = "std") -> NormalizationParams:
    """Column means and population spreads of ``data``.

    ``mode="std"`` divides by the standard deviation (z-scoring); ``"variance"``
    divides by the variance instead. Spreads below 1e-12 are replaced by 1.
    """
    if data.n < 2:
        raise DataError("need at least two rows to fit a normalizer")
    if mode not in ("std", "variance"):
        raise ValueError(f"unknown normalization mode {mode!r}")
    means = data.features.mean(axis=0)
    spread = data.features.std(axis=0)
    if mode == "variance":
        spread = spread**2
    spread = np.where(spread < 1e-12, 1.0, spread)
    return NormalizationParams(means, spread, mode)


def apply_normalizer(data: Dataset | np.ndarray, params: NormalizationParams):
    X = data.features if isinstance(data, Dataset) else np.asarray(data, dtype=float)
    if X.shape[-1] != len(params.means):
        raise DataError(f"normalizer has {len(params.means)} features, data has {X.shape[-1]}")
    Z = (X - params.means) / params.scales
    return replace(data, features=Z) if isinstance(data, Dataset) else Z


def invert_normalizer(data: Dataset | np.ndarray, params: NormalizationParams):
    Z = data.features if isinstance(data, Dataset) else np.asarray(data, dtype=float)
    X = Z * params.scales + params.means
    return replace(data, features=X) if isinstance(data, Dataset) else X


def draw_bag(n: int | Dataset, rng: np.random.Generator) -> BagSample:
    """Bootstrap: ``n`` uniform draws with replacement plus the out-of-bag rows."""
    if isinstance(n, Dataset):
        n = n.n
    if n < 1:
        raise DataError("cannot bag an empty dataset")
    idx = rng.integers(0, n, size=n)
    drawn = np.zeros(n, dtype=bool)
    drawn[idx] = True
    return BagSample(idx, np.flatnonzero(~drawn))


def kfold_splits(labels: np.ndarray | Dataset, k: int, rng: np.random.Generator):
    """Stratified k-fold split.

    Rows of each class are shuffled and the classes laid end to end; position
    ``i`` in that sequence goes to test fold ``i % k``. Returns a list of
    ``(train_idx, test_idx)`` pairs with sorted index arrays.
    """
    y = labels.labels if isinstance(labels, Dataset) else np.asarray(labels)
    if k < 2:
        raise DataError(f"k must be at least 2, got {k}")
    classes, counts = np.unique(y, return_counts=True)
    small = classes[counts < k]
    if len(small):
        raise DataError(f"classes {small.tolist()} have fewer than k={k} members; cannot stratify")
    order = np.concatenate([rng.permutation(np.flatnonzero(y == c)) for c in classes])
    fold_of = np.empty(len(y), dtype=np.intp)
    fold_of[order] = np.arange(len(y)) % k
    return [(np.flatnonzero(fold_of != f), np.flatnonzero(fold_of == f)) for f in range(k)]
