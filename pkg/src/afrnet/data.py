"""Dataset ingestion, binary matrix IO, split handling, and the seeded
synthetic benchmark used for desk-scale runs.

Directory layout of a dataset::

    features.afrm    binary matrix, one row per sample
    labels.csv       one integer class id per line
    semantics.afrm   binary matrix, row i = semantic vector of class id i
    split.json       {"seen": [...], "unseen": [...],
                      "test_seen": [...], "test_unseen": [...]}

``test_*`` entries are sample indices; seen-class samples outside
``test_seen`` form the training set.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .autodiff import as_matrix
from .errors import ContractError, DataError, DimensionError, FileFormatError

MATRIX_MAGIC = b"AFRM"
MATRIX_VERSION = 1


def save_matrix(path, matrix):
    """Write a matrix in the AFRM binary format (little-endian float64)."""
    matrix = as_matrix(matrix, "matrix")
    if matrix.shape[0] == 0 or matrix.shape[1] == 0:
        raise DataError(f"refusing to save an empty matrix of shape {matrix.shape}")
    with open(path, "wb") as fh:
        fh.write(MATRIX_MAGIC)
        fh.write(struct.pack("<I", MATRIX_VERSION))
        fh.write(struct.pack("<QQ", matrix.shape[0], matrix.shape[1]))
        fh.write(np.ascontiguousarray(matrix, dtype="<f8").tobytes())


def load_matrix(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise DataError(f"matrix file not found: {path}")
    data = path.read_bytes()
    header = 4 + 4 + 16
    if len(data) < header:
        raise FileFormatError(f"truncated matrix file {path}")
    if data[:4] != MATRIX_MAGIC:
        raise FileFormatError(f"bad magic in {path}")
    (version,) = struct.unpack("<I", data[4:8])
    if version != MATRIX_VERSION:
        raise FileFormatError(f"unsupported matrix version {version} in {path}")
    rows, cols = struct.unpack("<QQ", data[8:24])
    if rows == 0 or cols == 0:
        raise FileFormatError(f"empty matrix ({rows}x{cols}) in {path}")
    expected = header + rows * cols * 8
    if len(data) != expected:
        raise FileFormatError(f"{path} holds {len(data)} bytes, expected {expected}")
    matrix = np.frombuffer(data[header:], dtype="<f8").reshape(rows, cols).copy()
    return as_matrix(matrix, str(path))


def save_labels(path, labels):
    labels = np.asarray(labels, dtype=np.int64)
    with open(path, "w") as fh:
        for value in labels:
            fh.write(f"{int(value)}\n")


def load_labels(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise DataError(f"label file not found: {path}")
    try:
        values = [int(line) for line in path.read_text().split()]
    except ValueError as exc:
        raise FileFormatError(f"non-integer label in {path}: {exc}") from exc
    return np.asarray(values, dtype=np.int64)


# ---------------------------------------------------------------------------
# Dataset
# ---------------------------------------------------------------------------


@dataclass
class SplitReport:
    ok: bool
    violations: list


@dataclass
class Dataset:
    """Features with labels, per-class semantics, and the seen/unseen split."""

    features: np.ndarray
    labels: np.ndarray
    semantics: np.ndarray
    seen: np.ndarray
    unseen: np.ndarray
    test_seen: np.ndarray
    test_unseen: np.ndarray

    def __post_init__(self):
        self.features = as_matrix(self.features, "features")
        self.semantics = as_matrix(self.semantics, "semantics")
        self.labels = np.asarray(self.labels, dtype=np.int64)
        for name in ("seen", "unseen", "test_seen", "test_unseen"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.int64))

    @property
    def num_classes(self):
        return self.semantics.shape[0]

    def train_indices(self) -> np.ndarray:
        """Seen-class sample indices not held out for testing."""
        mask = np.isin(self.labels, self.seen)
        mask[self.test_seen] = False
        return np.flatnonzero(mask)

    def train_data(self):
        idx = self.train_indices()
        return self.features[idx], self.labels[idx]

    def test_seen_data(self):
        return self.features[self.test_seen], self.labels[self.test_seen]

    def test_unseen_data(self):
        return self.features[self.test_unseen], self.labels[self.test_unseen]


def validate_split(dataset: Dataset) -> SplitReport:
    """Check the split invariants; failures are reported, not raised."""
    v = []
    overlap = np.intersect1d(dataset.seen, dataset.unseen)
    if overlap.size:
        v.append(f"seen/unseen overlap on class(es) {overlap.tolist()}")
    n, num_classes = dataset.features.shape[0], dataset.num_classes
    if dataset.labels.size != n:
        v.append(f"{dataset.labels.size} labels for {n} feature rows")
    known = np.union1d(dataset.seen, dataset.unseen)
    stray = np.setdiff1d(np.unique(dataset.labels), known)
    if stray.size:
        v.append(f"label(s) {stray.tolist()} outside seen+unseen")
    no_row = known[(known < 0) | (known >= num_classes)]
    if no_row.size:
        v.append(f"class(es) {no_row.tolist()} have no semantic row")
    for name, idx in (("test_seen", dataset.test_seen), ("test_unseen", dataset.test_unseen)):
        if idx.size and (idx.min() < 0 or idx.max() >= n):
            v.append(f"{name} indices out of range")
    if not v:
        in_range = dataset.test_unseen
        wrong = np.setdiff1d(np.unique(dataset.labels[in_range]), dataset.unseen)
        if wrong.size:
            v.append(f"test_unseen contains seen-class sample(s) of class(es) {wrong.tolist()}")
        wrong = np.setdiff1d(np.unique(dataset.labels[dataset.test_seen]), dataset.seen)
        if wrong.size:
            v.append(f"test_seen contains unseen-class sample(s) of class(es) {wrong.tolist()}")
        unseen_idx = np.flatnonzero(np.isin(dataset.labels, dataset.unseen))
        untested = np.setdiff1d(unseen_idx, dataset.test_unseen)
        if untested.size:
            v.append(f"{untested.size} unseen-class sample(s) outside test_unseen")
    return SplitReport(not v, v)


def save_dataset(directory, dataset: Dataset):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_matrix(directory / "features.afrm", dataset.features)
    save_labels(directory / "labels.csv", dataset.labels)
    save_matrix(directory / "semantics.afrm", dataset.semantics)
    manifest = {
        "seen": dataset.seen.tolist(),
        "unseen": dataset.unseen.tolist(),
        "test_seen": dataset.test_seen.tolist(),
        "test_unseen": dataset.test_unseen.tolist(),
    }
    (directory / "split.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_dataset(directory) -> Dataset:
    """Load and validate a dataset directory; any violation raises."""
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"dataset directory not found: {directory}")
    split_path = directory / "split.json"
    if not split_path.exists():
        raise DataError(f"split manifest not found: {split_path}")
    manifest = json.loads(split_path.read_text())
    for key in ("seen", "unseen", "test_seen", "test_unseen"):
        if key not in manifest:
            raise FileFormatError(f"split manifest {split_path} lacks '{key}'")
    dataset = Dataset(
        features=load_matrix(directory / "features.afrm"),
        labels=load_labels(directory / "labels.csv"),
        semantics=load_matrix(directory / "semantics.afrm"),
        seen=manifest["seen"],
        unseen=manifest["unseen"],
        test_seen=manifest["test_seen"],
        test_unseen=manifest["test_unseen"],
    )
    report = validate_split(dataset)
    if not report.ok:
        raise DataError(f"invalid dataset in {directory}: " + "; ".join(report.violations))
    return dataset


# ---------------------------------------------------------------------------
# Synthetic benchmark
# ---------------------------------------------------------------------------


@dataclass
class SyntheticBenchmarkConfig:
    """Knobs of the seeded Gaussian-cluster benchmark.

    Consistent visual dimensions follow a fixed smooth map of the class
    semantics; the ``noise_fraction`` of dimensions is class-level noise
    that no semantic can predict, which is what the feature-selection
    ablation exercises. A fifth of each seen class is held out as the
    seen test split.
    """

    seen_classes: int = 20
    unseen_classes: int = 5
    samples_per_class: int = 30
    visual_dim: int = 32
    semantic_dim: int = 16
    sigma_intra: float = 0.3
    sigma_inter: float = 1.0
    noise_fraction: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.sigma_intra <= 0 or self.sigma_inter <= 0:
            raise ContractError("sigma_intra and sigma_inter must be > 0")
        if not (0.0 <= self.noise_fraction <= 1.0):
            raise ContractError(f"noise_fraction must be in [0, 1], got {self.noise_fraction}")
        if min(self.seen_classes, self.unseen_classes, self.visual_dim, self.semantic_dim) < 1:
            raise ContractError("class counts and dimensions must be >= 1")
        if self.samples_per_class < 2:
            raise ContractError("samples_per_class must be >= 2 (one row is held out per seen class)")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class BenchmarkTruth:
    """Class-level ground truth behind a generated benchmark."""

    semantics: np.ndarray
    prototypes: np.ndarray
    noise_dims: np.ndarray
    seen: np.ndarray
    unseen: np.ndarray


def _class_level(rng, config: SyntheticBenchmarkConfig) -> BenchmarkTruth:
    total = config.seen_classes + config.unseen_classes
    v, s = config.visual_dim, config.semantic_dim
    n_noise = int(round(config.noise_fraction * v))
    noise_dims = np.sort(rng.permutation(v)[:n_noise])
    semantics = rng.standard_normal((total, s))
    weights = rng.standard_normal((s, v)) / np.sqrt(s)
    shifts = rng.standard_normal((1, v))
    prototypes = config.sigma_inter * np.tanh(semantics @ weights + shifts)
    if n_noise:
        prototypes[:, noise_dims] = config.sigma_inter * rng.standard_normal((total, n_noise))
    return BenchmarkTruth(
        semantics=semantics,
        prototypes=prototypes,
        noise_dims=noise_dims,
        seen=np.arange(config.seen_classes, dtype=np.int64),
        unseen=np.arange(config.seen_classes, total, dtype=np.int64),
    )


def benchmark_ground_truth(config: SyntheticBenchmarkConfig) -> BenchmarkTruth:
    """The class-level quantities a generated benchmark is built from."""
    return _class_level(np.random.default_rng(config.seed), config)


def generate_synthetic_benchmark(config: SyntheticBenchmarkConfig) -> Dataset:
    """Seeded benchmark: samples are prototype + N(0, sigma_intra^2) rows."""
    rng = np.random.default_rng(config.seed)
    truth = _class_level(rng, config)
    total = config.seen_classes + config.unseen_classes
    n_per = config.samples_per_class
    features = np.empty((total * n_per, config.visual_dim))
    labels = np.empty(total * n_per, dtype=np.int64)
    for cid in range(total):
        block = slice(cid * n_per, (cid + 1) * n_per)
        residuals = config.sigma_intra * rng.standard_normal((n_per, config.visual_dim))
        features[block] = truth.prototypes[cid] + residuals
        labels[block] = cid
    holdout = max(1, int(round(0.2 * n_per)))
    test_seen = np.concatenate(
        [np.arange((cid + 1) * n_per - holdout, (cid + 1) * n_per) for cid in truth.seen]
    )
    test_unseen = np.flatnonzero(np.isin(labels, truth.unseen))
    return Dataset(
        features=features,
        labels=labels,
        semantics=truth.semantics,
        seen=truth.seen,
        unseen=truth.unseen,
        test_seen=test_seen,
        test_unseen=test_unseen,
    )
