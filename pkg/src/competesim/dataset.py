"""CSV ingestion and train/test preparation for empirical user streams.

Categorical columns are one-hot encoded with a vocabulary fixed at load
time. Numeric columns are z-scored with statistics of the training split
only. The label vocabulary is also fixed at load, sorted, so class ids are
stable across runs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ConfigError, InvalidArgumentError


class Split(NamedTuple):
    X_train: np.ndarray
    y_train: np.ndarray
    g_train: np.ndarray | None
    X_test: np.ndarray
    y_test: np.ndarray
    g_test: np.ndarray | None


@dataclass
class Dataset:
    numeric: np.ndarray                    # (n, num_numeric) raw values
    categorical: np.ndarray                # (n, num_categorical) vocabulary codes
    y: np.ndarray
    numeric_names: list[str]
    categorical_names: list[str]
    vocabularies: list[list[str]]
    label_names: list[str] | None          # None for regression
    groups: np.ndarray | None = None
    group_names: list[str] | None = None
    feature_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.feature_names:
            self.feature_names = list(self.numeric_names) + [
                f"{col}={v}" for col, vocab in zip(self.categorical_names, self.vocabularies) for v in vocab]

    def __len__(self) -> int:
        return len(self.y)

    @property
    def num_classes(self) -> int | None:
        return None if self.label_names is None else len(self.label_names)

    @property
    def dim(self) -> int:
        return len(self.feature_names)

    @property
    def num_groups(self) -> int | None:
        return None if self.group_names is None else len(self.group_names)

    def encode(self, rows: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
        """Feature matrix for ``rows``: z-scored numerics followed by one-hot blocks."""
        parts = [(self.numeric[rows] - mean) / std]
        for c, vocab in enumerate(self.vocabularies):
            onehot = np.zeros((rows.size, len(vocab)))
            onehot[np.arange(rows.size), self.categorical[rows, c]] = 1.0
            parts.append(onehot)
        return np.hstack(parts) if parts else np.zeros((rows.size, 0))

    def split(self, test_fraction: float, rng: np.random.Generator) -> Split:
        """Random held-out split; normalization statistics come from the training rows."""
        if not 0 <= test_fraction < 1:
            raise InvalidArgumentError("test fraction must lie in [0, 1)")
        order = rng.permutation(len(self))
        n_test = int(round(test_fraction * len(self)))
        test, train = np.sort(order[:n_test]), np.sort(order[n_test:])
        if train.size == 0:
            raise InvalidArgumentError("no training rows left after the split")
        mean = self.numeric[train].mean(axis=0)
        std = self.numeric[train].std(axis=0)
        std[std == 0] = 1.0
        g = self.groups
        return Split(self.encode(train, mean, std), self.y[train], None if g is None else g[train],
                     self.encode(test, mean, std), self.y[test], None if g is None else g[test])


def load_dataset(path, label: str, categorical: Sequence[str] = (), group: str | None = None,
                 classification: bool = True) -> Dataset:
    """Read a headed CSV file.

    ``group`` names a categorical column whose values define the rows of a
    group-conditional specialization matrix; it stays a feature too.
    Malformed rows raise :class:`ConfigError` naming the 1-based line and column.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"dataset file not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ConfigError(f"{path}: empty file, expected a header row") from None
        rows = [(reader.line_num, r) for r in reader if any(cell.strip() for cell in r)]
    if len(set(header)) != len(header):
        raise ConfigError(f"{path}: duplicate column names in header")
    for col in [label, *categorical] + ([group] if group else []):
        if col not in header:
            raise ConfigError(f"{path}: column {col!r} not in header")
    if group and group not in categorical:
        raise ConfigError(f"{path}: group column {group!r} must also be listed as categorical")
    if not rows:
        raise ConfigError(f"{path}: no data rows")

    cat_set = set(categorical)
    num_cols = [h for h in header if h != label and h not in cat_set]
    idx = {h: i for i, h in enumerate(header)}
    numeric = np.empty((len(rows), len(num_cols)))
    raw_cat = [[None] * len(rows) for _ in categorical]
    raw_y = []
    for n, (line, r) in enumerate(rows):
        if len(r) != len(header):
            raise ConfigError(f"{path}: line {line}: expected {len(header)} fields, got {len(r)}")
        for c, col in enumerate(num_cols):
            cell = r[idx[col]].strip()
            try:
                numeric[n, c] = float(cell)
            except ValueError:
                raise ConfigError(f"{path}: line {line}, column {col!r}: "
                                  f"non-numeric value {cell!r}") from None
        for c, col in enumerate(categorical):
            raw_cat[c][n] = r[idx[col]].strip()
        cell = r[idx[label]].strip()
        if classification:
            raw_y.append(cell)
        else:
            try:
                raw_y.append(float(cell))
            except ValueError:
                raise ConfigError(f"{path}: line {line}, column {label!r}: "
                                  f"non-numeric label {cell!r}") from None

    vocabularies = [sorted(set(vals)) for vals in raw_cat]
    codes = np.zeros((len(rows), len(categorical)), dtype=np.int64)
    for c, (vals, vocab) in enumerate(zip(raw_cat, vocabularies)):
        lookup = {v: i for i, v in enumerate(vocab)}
        codes[:, c] = [lookup[v] for v in vals]

    if classification:
        label_names = sorted(set(raw_y))
        lookup = {v: i for i, v in enumerate(label_names)}
        y = np.array([lookup[v] for v in raw_y], dtype=np.int64)
    else:
        label_names = None
        y = np.array(raw_y, dtype=float)

    groups = group_names = None
    if group:
        gi = list(categorical).index(group)
        groups, group_names = codes[:, gi].copy(), vocabularies[gi]
    return Dataset(numeric, codes, y, num_cols, list(categorical), vocabularies, label_names,
                   groups, group_names)
