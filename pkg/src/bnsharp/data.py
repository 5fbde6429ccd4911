"""Synthetic datasets, CSV ingestion, and seeded batching."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .network import Batch

__all__ = [
    "Dataset",
    "DatasetError",
    "gen_blobs",
    "gen_spirals",
    "load_csv",
    "standardize",
    "batches",
]


class DatasetError(ValueError):
    pass


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    n_classes: int
    train_idx: np.ndarray
    test_idx: np.ndarray

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        if self.features.shape[0] != self.labels.shape[0]:
            raise DatasetError("feature rows and labels disagree")
        if self.labels.min(initial=0) < 0 or self.labels.max(initial=0) >= self.n_classes:
            raise DatasetError("labels out of range")
        if np.intersect1d(self.train_idx, self.test_idx).size:
            raise DatasetError("train and test splits overlap")

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def train_batch(self) -> Batch:
        return Batch(self.features[self.train_idx], self.labels[self.train_idx])

    def test_batch(self) -> Batch:
        return Batch(self.features[self.test_idx], self.labels[self.test_idx])


def _split(n: int, rng: np.random.Generator, test_fraction: float = 0.2):
    perm = rng.permutation(n)
    n_test = int(round(n * test_fraction))
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def gen_blobs(seed: int, n_per_class: int, n_classes: int,
              noise_sigma: float) -> Dataset:
    """Gaussian clusters at fixed centers on a circle of radius 3; 80/20 split."""
    if n_per_class < 2:
        raise DatasetError("need at least 2 points per class")
    rng = np.random.default_rng([int(seed), 0xB10B])
    angles = 2.0 * np.pi * np.arange(n_classes) / n_classes
    centers = 3.0 * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    xs, ys = [], []
    for c in range(n_classes):
        xs.append(centers[c] + noise_sigma * rng.standard_normal((n_per_class, 2)))
        ys.append(np.full(n_per_class, c))
    features = np.concatenate(xs)
    labels = np.concatenate(ys)
    train_idx, test_idx = _split(len(labels), rng)
    return Dataset(features, labels, n_classes, train_idx, test_idx)


def gen_spirals(seed: int, n_per_class: int, turns: float,
                noise_sigma: float) -> Dataset:
    """Two interleaved Archimedean spiral arms; 80/20 split."""
    if n_per_class < 2:
        raise DatasetError("need at least 2 points per class")
    rng = np.random.default_rng([int(seed), 0x5B12A1])
    xs, ys = [], []
    for c in range(2):
        t = np.sqrt(rng.random(n_per_class))  # denser sampling near the center
        angle = 2.0 * np.pi * turns * t + np.pi * c
        radius = 3.0 * t
        pts = np.stack([radius * np.cos(angle), radius * np.sin(angle)], axis=1)
        pts += noise_sigma * rng.standard_normal((n_per_class, 2))
        xs.append(pts)
        ys.append(np.full(n_per_class, c))
    features = np.concatenate(xs)
    labels = np.concatenate(ys)
    train_idx, test_idx = _split(len(labels), rng)
    return Dataset(features, labels, 2, train_idx, test_idx)


def load_csv(path, standardize_features: bool = False, seed: int = 0) -> Dataset:
    """Parse a headered CSV whose last column is an integer class label."""
    path = Path(path)
    rows = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: empty file") from None
        if len(header) < 2:
            raise DatasetError(f"{path}: need at least one feature column and a label")
        width = len(header)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise DatasetError(f"{path}: line {lineno}: expected {width} columns, "
                                   f"got {len(row)}")
            try:
                feats = [float(v) for v in row[:-1]]
                label = int(row[-1])
            except ValueError as exc:
                raise DatasetError(f"{path}: line {lineno}: {exc}") from None
            rows.append((feats, label))
    if not rows:
        raise DatasetError(f"{path}: no data rows")
    features = np.array([r[0] for r in rows])
    labels = np.array([r[1] for r in rows])
    if labels.min() < 0:
        raise DatasetError(f"{path}: negative class label")
    n_classes = int(labels.max()) + 1
    rng = np.random.default_rng([int(seed), 0xC57])
    train_idx, test_idx = _split(len(labels), rng)
    ds = Dataset(features, labels, n_classes, train_idx, test_idx)
    if standardize_features:
        ds = standardize(ds)
    return ds


def standardize(ds: Dataset) -> Dataset:
    """Shift/scale features to zero mean, unit variance on the train split."""
    mean = ds.features[ds.train_idx].mean(axis=0)
    std = ds.features[ds.train_idx].std(axis=0)
    std[std == 0] = 1.0
    return Dataset((ds.features - mean) / std, ds.labels, ds.n_classes,
                   ds.train_idx, ds.test_idx)


def batches(ds: Dataset, batch_size: int, seed: int, epoch: int) -> list[Batch]:
    """Shuffled train-split batches, deterministic in (seed, epoch).

    A trailing batch of fewer than 2 samples is dropped (batch statistics
    need it).
    """
    if batch_size < 2:
        raise DatasetError("batch_size must be at least 2")
    rng = np.random.default_rng([int(seed), int(epoch), 0xBA7C])
    order = ds.train_idx[rng.permutation(len(ds.train_idx))]
    out = []
    for start in range(0, len(order), batch_size):
        idx = order[start:start + batch_size]
        if len(idx) < 2:
            break
        out.append(Batch(ds.features[idx], ds.labels[idx]))
    return out
