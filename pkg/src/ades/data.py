"""Desk-scale datasets: Gaussian blobs and a plain CSV format."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autodiff import SeededRng
from .errors import DatasetError


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    split: str = "train"

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.features.shape[0] == 0:
            raise DatasetError("empty dataset")
        if self.labels.shape != (self.features.shape[0],):
            raise DatasetError("labels do not match features")
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise DatasetError(f"label out of range [0, {self.num_classes})")

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def batches(self, batch_size: int):
        for start in range(0, len(self), batch_size):
            yield self.features[start:start + batch_size], self.labels[start:start + batch_size]


def blob_centers(K: int, d: int, radius: float = 0.2) -> np.ndarray:
    """Class centers: a circle around (0.5, 0.5) for d=2, hypercube corners otherwise."""
    if d == 2:
        angles = 2 * np.pi * np.arange(K) / K
        return 0.5 + radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    if d == 1:
        if K > 2:
            raise DatasetError("d=1 supports at most 2 classes")
        return np.array([[0.5 - radius], [0.5 + radius]])[:K]
    if K > 2 ** d:
        raise DatasetError(f"K={K} classes need more than 2**{d} hypercube corners")
    bits = (np.arange(K)[:, None] >> np.arange(d)[None, :]) & 1
    return 0.5 + radius * (2.0 * bits - 1.0)


def make_blobs(n_per_class: int, K: int, d: int, spread: float, seed: int,
               split: str = "train", radius: float = 0.2) -> Dataset:
    if n_per_class < 1 or K < 1 or d < 1 or spread < 0:
        raise DatasetError("make_blobs parameters must be positive")
    rng = SeededRng(seed).stream(f"blobs.{split}")
    centers = blob_centers(K, d, radius)
    labels = np.repeat(np.arange(K), n_per_class)
    x = centers[labels] + spread * rng.normal((labels.size, d))
    order = rng.permutation(labels.size)
    return Dataset(np.clip(x[order], 0.0, 1.0), labels[order], K, split)


def load_csv_dataset(path, K: int, split: str = "train") -> Dataset:
    """Rows of d feature columns in [0, 1] followed by an integer label."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DatasetError(f"cannot read dataset {path}: {exc}") from exc
    rows, labels = [], []
    for lineno, row in enumerate(csv.reader(text.splitlines()), start=1):
        if not row or all(not c.strip() for c in row):
            continue
        try:
            feats = [float(c) for c in row[:-1]]
            label = int(row[-1])
        except ValueError as exc:
            raise DatasetError(f"{path}:{lineno}: malformed row: {exc}") from exc
        if not feats:
            raise DatasetError(f"{path}:{lineno}: row has no feature columns")
        if rows and len(feats) != len(rows[0]):
            raise DatasetError(f"{path}:{lineno}: expected {len(rows[0])} features, got {len(feats)}")
        if not 0 <= label < K:
            raise DatasetError(f"{path}:{lineno}: label {label} out of range [0, {K})")
        if any(not 0.0 <= f <= 1.0 for f in feats):
            raise DatasetError(f"{path}:{lineno}: feature outside [0, 1]")
        rows.append(feats)
        labels.append(label)
    if not rows:
        raise DatasetError("empty dataset")
    return Dataset(np.array(rows), np.array(labels), K, split)


def save_csv_dataset(path, ds: Dataset) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for feats, label in zip(ds.features, ds.labels):
            w.writerow([repr(float(f)) for f in feats] + [int(label)])
