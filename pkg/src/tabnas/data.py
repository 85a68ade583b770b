"""Tabular datasets: CSV ingestion, deterministic splits, synthetic tasks."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ValidationError


class DatasetError(ValidationError):
    def __init__(self, message: str, line: Optional[int] = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    train_indices: np.ndarray
    validation_indices: np.ndarray
    column_names: list[str]
    num_classes: int

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    @property
    def output_dim(self) -> int:
        """One logit for binary tasks, one per class otherwise."""
        return 1 if self.num_classes == 2 else self.num_classes

    @property
    def train(self) -> tuple[np.ndarray, np.ndarray]:
        return self.features[self.train_indices], self.labels[self.train_indices]

    @property
    def validation(self) -> tuple[np.ndarray, np.ndarray]:
        return self.features[self.validation_indices], self.labels[self.validation_indices]


def split_indices(n: int, split_ratio: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    if not 0.0 < split_ratio < 1.0:
        raise ValidationError("split_ratio must lie strictly between 0 and 1")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(split_ratio * n))
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def _is_float(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def load_csv(path: str | Path, label_column: str, split_ratio: float = 0.8, seed: int = 0,
             standardize: bool = False) -> Dataset:
    """Read a headered UTF-8 CSV into a :class:`Dataset`.

    A column is numeric when its first value parses as a float; any later
    unparsable value in it is an error.  Other columns are one-hot encoded
    with categories in order of first appearance.  Labels are re-indexed to
    ``0..c-1`` in sorted order (numerically when all labels are numbers).
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DatasetError("file is empty", line=1) from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DatasetError(f"expected {len(header)} fields, found {len(row)}", line=lineno)
            rows.append((lineno, [c.strip() for c in row]))
    if label_column not in header:
        raise DatasetError(f"label column {label_column!r} not in header")
    if not rows:
        raise DatasetError("no data rows")
    li = header.index(label_column)

    columns: list[np.ndarray] = []
    names: list[str] = []
    for ci, name in enumerate(header):
        if ci == li:
            continue
        values = [(ln, r[ci]) for ln, r in rows]
        if _is_float(values[0][1]):
            col = np.empty(len(values))
            for k, (ln, v) in enumerate(values):
                try:
                    col[k] = float(v)
                except ValueError:
                    raise DatasetError(f"column {name!r}: cannot parse {v!r} as a number", line=ln) from None
            if not np.all(np.isfinite(col)):
                raise DatasetError(f"column {name!r} contains non-finite values")
            columns.append(col)
            names.append(name)
        else:
            cats: dict[str, int] = {}
            for _, v in values:
                cats.setdefault(v, len(cats))
            codes = np.array([cats[v] for _, v in values])
            onehot = np.eye(len(cats))[codes]
            for cat, j in cats.items():
                columns.append(onehot[:, j])
                names.append(f"{name}={cat}")

    raw_labels = [r[li] for _, r in rows]
    uniq = sorted(set(raw_labels), key=(lambda s: float(s)) if all(map(_is_float, raw_labels)) else None)
    if len(uniq) < 2:
        raise DatasetError("labels take a single value; need at least two classes")
    lookup = {v: k for k, v in enumerate(uniq)}
    labels = np.array([lookup[v] for v in raw_labels], dtype=np.int64)

    X = np.column_stack(columns) if columns else np.empty((len(rows), 0))
    if X.shape[1] == 0:
        raise DatasetError("no feature columns")
    train, val = split_indices(len(rows), split_ratio, seed)
    if standardize:
        mu = X[train].mean(axis=0)
        sd = X[train].std(axis=0)
        X = (X - mu) / np.where(sd > 0, sd, 1.0)
    return Dataset(X, labels, train, val, names, len(uniq))


def from_arrays(X: np.ndarray, y: np.ndarray, split_ratio: float = 0.8, seed: int = 0) -> Dataset:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    train, val = split_indices(len(y), split_ratio, seed)
    return Dataset(X, y, train, val, [f"x{i}" for i in range(X.shape[1])], int(y.max()) + 1)


def linearly_separable(n: int = 200, d: int = 2, margin: float = 0.5, seed: int = 0,
                       split_ratio: float = 0.8) -> Dataset:
    """Uniform points labelled by a random hyperplane, each pushed `margin` away from it."""
    rng = np.random.default_rng(seed)
    w = rng.normal(size=d)
    w /= np.linalg.norm(w)
    X = rng.uniform(-2, 2, size=(n, d))
    s = X @ w
    X += np.outer(np.where(s >= 0, margin, -margin), w)
    y = (X @ w > 0).astype(np.int64)
    return from_arrays(X, y, split_ratio, seed)


def teacher_classification(n: int = 5000, d: int = 10, hidden: int = 64, seed: int = 0,
                           label_noise: float = 0.0, split_ratio: float = 0.8) -> Dataset:
    """Binary labels from a random two-layer ReLU teacher network.

    The decision boundary is nonlinear, so wider students fit it better,
    which is what makes one-shot versus stand-alone rank comparisons
    informative.
    """
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    W1 = rng.normal(size=(d, hidden)) / math.sqrt(d)
    b1 = rng.normal(size=hidden) * 0.5
    w2 = rng.normal(size=hidden) / math.sqrt(hidden)
    score = np.maximum(X @ W1 + b1, 0.0) @ w2
    y = (score > np.median(score)).astype(np.int64)
    if label_noise > 0:
        flip = rng.random(n) < label_noise
        y = np.where(flip, 1 - y, y)
    return from_arrays(X, y, split_ratio, seed)
