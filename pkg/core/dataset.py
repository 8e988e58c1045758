"""
Activity datasets for the fog clients: UCI-HAR ingestion, a synthetic
stand-in for desk-scale runs, and per-client shard assignment.
"""
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import DatasetError

logger = logging.getLogger(__name__)

HAR_FEATURES = 561
HAR_CLASSES = 6

TRAIN = 'train'
TEST = 'test'

REPLICATE = 'replicate'
IID_PARTITION = 'iid'
SHARD_MODES = (REPLICATE, IID_PARTITION)

# Distance between synthetic class means, in noise standard deviations.
SYNTHETIC_SEPARATION = 6.5


@dataclass(frozen=True, eq=False)
class Dataset:
    """Labelled feature matrix; rows are instances, labels are 0-based"""
    features: np.ndarray
    labels: np.ndarray
    split: str
    num_classes: int = HAR_CLASSES

    def __post_init__(self):
        if self.features.ndim != 2:
            raise DatasetError(f"features must be a matrix, got {self.features.ndim} dimensions")
        if self.labels.ndim != 1 or len(self.labels) != self.features.shape[0]:
            raise DatasetError(
                f"{self.features.shape[0]} feature rows but {len(self.labels)} labels"
            )
        if self.split not in (TRAIN, TEST):
            raise DatasetError(f"unknown split tag '{self.split}'")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise DatasetError(f"labels must lie in 0..{self.num_classes - 1}")

    def __len__(self):
        return len(self.labels)

    @property
    def feature_count(self):
        return self.features.shape[1]

    def subset(self, rows):
        return Dataset(self.features[rows], self.labels[rows], self.split, self.num_classes)

    def label_histogram(self):
        return np.bincount(self.labels, minlength=self.num_classes)


@dataclass(frozen=True)
class ShardPlan:
    mode: str = REPLICATE
    client_count: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.mode not in SHARD_MODES:
            raise DatasetError(f"unknown shard mode '{self.mode}', expected one of {SHARD_MODES}")
        if self.client_count < 1:
            raise DatasetError("client_count must be at least 1")


def _locate(dir_path, name, split):
    """UCI ships X_train.txt under train/; a flat directory is accepted too."""
    for candidate in (dir_path / name, dir_path / split / name):
        if candidate.is_file():
            return candidate
    raise DatasetError(f"missing file {name} in {dir_path}")


def _read_matrix(path):
    try:
        matrix = np.loadtxt(path, dtype=np.float64, ndmin=2)
    except ValueError as exc:
        raise DatasetError(f"{path}: {exc}") from exc
    return matrix.astype(np.float32)


def _read_labels(path):
    try:
        raw = np.loadtxt(path, dtype=np.float64, ndmin=1)
    except ValueError as exc:
        raise DatasetError(f"{path}: {exc}") from exc
    if raw.ndim != 1:
        raise DatasetError(f"{path}: expected one label per line")
    if not np.all(raw == np.round(raw)):
        raise DatasetError(f"{path}: labels must be integers")
    labels = raw.astype(np.int64)
    if len(labels) and (labels.min() < 1 or labels.max() > HAR_CLASSES):
        bad = labels[(labels < 1) | (labels > HAR_CLASSES)][0]
        raise DatasetError(f"{path}: label {bad} outside 1..{HAR_CLASSES}")
    return labels - 1


def _load_split(dir_path, split):
    x_path = _locate(dir_path, f'X_{split}.txt', split)
    y_path = _locate(dir_path, f'y_{split}.txt', split)
    features = _read_matrix(x_path)
    labels = _read_labels(y_path)
    if features.shape[0] != len(labels):
        raise DatasetError(
            f"{x_path.name} has {features.shape[0]} rows but {y_path.name} has {len(labels)} labels"
        )
    return Dataset(features, labels, split)


def load_har(dir_path):
    """
    Load the 561-feature UCI-HAR splits. Labels on disk are 1-based and come
    back 0-based; features are used as shipped (already scaled to [-1, 1]).
    """
    dir_path = Path(dir_path)
    if not dir_path.is_dir():
        raise DatasetError(f"dataset directory not found: {dir_path}")
    train = _load_split(dir_path, TRAIN)
    test = _load_split(dir_path, TEST)
    if train.feature_count != test.feature_count:
        raise DatasetError(
            f"train has {train.feature_count} features but test has {test.feature_count}"
        )
    logger.info("Loaded UCI-HAR from %s: %d train / %d test rows", dir_path, len(train), len(test))
    return train, test


def synth_dataset(seed, n, d, c):
    """
    Gaussian clusters with unit noise, one per class. Class j raises a block of
    d // c features; when d < c the means sit on a line instead. Either way
    every pair of means is at least SYNTHETIC_SEPARATION apart.
    """
    if c < 2 or n < c or d < 1:
        raise DatasetError(f"invalid synthetic sizes n={n}, d={d}, c={c}; need n >= c >= 2 and d >= 1")
    rng = np.random.Generator(np.random.PCG64(seed))

    means = np.zeros((c, d), dtype=np.float64)
    width = d // c
    if width >= 1:
        amplitude = SYNTHETIC_SEPARATION / np.sqrt(2 * width)
        for j in range(c):
            means[j, j * width:(j + 1) * width] = amplitude
    else:
        step = SYNTHETIC_SEPARATION / np.sqrt(d)
        means[:] = np.arange(c, dtype=np.float64)[:, None] * step

    labels = rng.permutation(np.arange(n) % c).astype(np.int64)
    features = (means[labels] + rng.standard_normal((n, d))).astype(np.float32)

    n_train = (7 * n) // 10
    train = Dataset(features[:n_train], labels[:n_train], TRAIN, c)
    test = Dataset(features[n_train:], labels[n_train:], TEST, c)
    return train, test


def make_shards(train, plan):
    """Assign a training shard to each fog client"""
    if plan.mode == REPLICATE:
        return [train for _ in range(plan.client_count)]

    if plan.client_count > len(train):
        raise DatasetError(
            f"cannot partition {len(train)} rows across {plan.client_count} clients"
        )
    rng = np.random.Generator(np.random.PCG64(plan.seed))
    order = rng.permutation(len(train))
    return [train.subset(rows) for rows in np.array_split(order, plan.client_count)]
