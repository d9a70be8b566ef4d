"""Dataset ingestion and class statistics.

Two sources: MNIST-style IDX files (big-endian magic + dims + raw bytes)
and seeded synthetic Gaussian blobs with controllable class imbalance.
Datasets are immutable after construction and safe to share across
threads.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import rng

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    """Raised on bad magic numbers, truncated payloads, or count mismatches."""


@dataclass(frozen=True)
class Dataset:
    """Feature matrix (m x d), integer labels in [0, d_y), class count d_y."""

    features: np.ndarray
    labels: np.ndarray
    d_y: int

    def __post_init__(self):
        feats = np.ascontiguousarray(self.features, dtype=np.float64)
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if feats.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {feats.shape}")
        if labels.ndim != 1 or labels.shape[0] != feats.shape[0]:
            raise ValueError("labels must be a vector matching the number of rows")
        if not np.isfinite(feats).all():
            raise ValueError("features must be finite")
        if self.d_y < 2:
            raise ValueError("need at least two classes")
        if labels.size and (labels.min() < 0 or labels.max() >= self.d_y):
            raise ValueError(f"labels must lie in [0, {self.d_y})")
        feats.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)

    @property
    def m(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class ClassStats:
    """Per-class counts m_j, their minimum, and the input radius B."""

    counts: tuple[int, ...]
    m_min: int
    input_radius: float


@dataclass(frozen=True)
class BatchPlan:
    """A shuffled index permutation split into minibatches."""

    seed: int
    batch_size: int
    permutation: np.ndarray

    def batches(self):
        m = self.permutation.shape[0]
        for start in range(0, m, self.batch_size):
            yield self.permutation[start : start + self.batch_size]


def batch_plan(m: int, batch_size: int, seed: int, epoch: int) -> BatchPlan:
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    g = rng.generator(seed, rng.SHUFFLE, epoch)
    perm = g.permutation(m)
    return BatchPlan(seed=seed, batch_size=batch_size, permutation=perm)


def _read_be_u32(buf: bytes, offset: int, path: str) -> int:
    if offset + 4 > len(buf):
        raise IdxFormatError(f"{path}: truncated header")
    return struct.unpack_from(">I", buf, offset)[0]


def _load_idx_images_bytes(raw: bytes, path: str) -> np.ndarray:
    magic = _read_be_u32(raw, 0, path)
    if magic != IDX_IMAGES_MAGIC:
        raise IdxFormatError(
            f"{path}: bad magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x} for images"
        )
    count = _read_be_u32(raw, 4, path)
    rows = _read_be_u32(raw, 8, path)
    cols = _read_be_u32(raw, 12, path)
    payload = raw[16:]
    expected = count * rows * cols
    if len(payload) != expected:
        raise IdxFormatError(
            f"{path}: image payload has {len(payload)} bytes, expected {expected}"
        )
    return np.frombuffer(payload, dtype=np.uint8).reshape(count, rows, cols)


def _load_idx_labels_bytes(raw: bytes, path: str) -> np.ndarray:
    magic = _read_be_u32(raw, 0, path)
    if magic != IDX_LABELS_MAGIC:
        raise IdxFormatError(
            f"{path}: bad magic 0x{magic:08x}, expected 0x{IDX_LABELS_MAGIC:08x} for labels"
        )
    count = _read_be_u32(raw, 4, path)
    payload = raw[8:]
    if len(payload) != count:
        raise IdxFormatError(f"{path}: label payload has {len(payload)} bytes, expected {count}")
    return np.frombuffer(payload, dtype=np.uint8)


def load_idx_images(path) -> np.ndarray:
    """Raw uint8 image array (count, rows, cols) from an IDX image file."""
    with open(path, "rb") as f:
        return _load_idx_images_bytes(f.read(), str(path))


def load_idx_labels(path) -> np.ndarray:
    """Raw uint8 label vector from an IDX label file."""
    with open(path, "rb") as f:
        return _load_idx_labels_bytes(f.read(), str(path))


def idx_images_bytes(images: np.ndarray) -> bytes:
    images = np.ascontiguousarray(images, dtype=np.uint8)
    if images.ndim != 3:
        raise ValueError("images must have shape (count, rows, cols)")
    count, rows, cols = images.shape
    return struct.pack(">IIII", IDX_IMAGES_MAGIC, count, rows, cols) + images.tobytes()


def idx_labels_bytes(labels: np.ndarray) -> bytes:
    labels = np.ascontiguousarray(labels, dtype=np.uint8)
    if labels.ndim != 1:
        raise ValueError("labels must be a vector")
    return struct.pack(">II", IDX_LABELS_MAGIC, labels.shape[0]) + labels.tobytes()


def write_idx_images(path, images: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(idx_images_bytes(images))


def write_idx_labels(path, labels: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(idx_labels_bytes(labels))


def load_mnist_idx(images_path, labels_path) -> Dataset:
    """MNIST-style dataset: pixels scaled to [0, 1] by /255, d_y = 10.

    Raises IdxFormatError on bad magic, truncation, or when the two files
    disagree on the sample count.
    """
    images = load_idx_images(images_path)
    labels = load_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise IdxFormatError(
            f"count mismatch: {images.shape[0]} images vs {labels.shape[0]} labels"
        )
    feats = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return Dataset(features=feats, labels=labels.astype(np.int64), d_y=10)


def dataset_to_idx_payload(ds: Dataset, rows: int, cols: int) -> tuple[bytes, bytes]:
    """Re-serialize a loaded MNIST dataset back to IDX bytes (inverse of /255)."""
    if rows * cols != ds.dim:
        raise ValueError(f"rows*cols = {rows * cols} does not match feature dim {ds.dim}")
    pixels = np.rint(ds.features * 255.0).astype(np.uint8).reshape(ds.m, rows, cols)
    return idx_images_bytes(pixels), idx_labels_bytes(ds.labels.astype(np.uint8))


def synth_blobs(
    d: int,
    d_y: int,
    counts,
    centers_scale: float,
    noise_std: float,
    seed: int,
) -> Dataset:
    """Gaussian blob classes with deterministic, well-separated centers.

    Class centers are drawn once from the seed stream and rescaled so the
    minimum pairwise distance is at least `centers_scale`; class j points
    are N(mu_j, noise_std^2 I) from per-class derived streams, so the same
    seed always reproduces the same dataset.
    """
    counts = tuple(int(c) for c in counts)
    if d_y < 2:
        raise ValueError("need at least two classes")
    if len(counts) != d_y:
        raise ValueError(f"counts must have length d_y = {d_y}")
    if any(c < 1 for c in counts):
        raise ValueError("every class needs at least one sample")

    g = rng.generator(seed, rng.CENTERS)
    centers = g.normal(0.0, 1.0, size=(d_y, d))
    # guard against the measure-zero case of coincident raw centers
    for _ in range(16):
        diffs = centers[:, None, :] - centers[None, :, :]
        dist = np.sqrt((diffs * diffs).sum(axis=2))
        dmin = dist[~np.eye(d_y, dtype=bool)].min()
        if dmin > 0.0:
            break
        centers = g.normal(0.0, 1.0, size=(d_y, d))
    else:
        raise RuntimeError("could not draw distinct blob centers")
    if dmin < centers_scale:
        centers = centers * (centers_scale / dmin)

    feats = np.empty((sum(counts), d))
    labels = np.empty(sum(counts), dtype=np.int64)
    row = 0
    for j, cnt in enumerate(counts):
        gj = rng.generator(seed, rng.NOISE, j)
        feats[row : row + cnt] = centers[j] + noise_std * gj.normal(0.0, 1.0, size=(cnt, d))
        labels[row : row + cnt] = j
        row += cnt
    return Dataset(features=feats, labels=labels, d_y=d_y)


def class_stats(ds: Dataset) -> ClassStats:
    """Exact per-class counts, their minimum, and B = max_q ||x_q||_2."""
    if ds.m == 0:
        raise ValueError("dataset is empty")
    counts = np.bincount(ds.labels, minlength=ds.d_y)
    radius = float(np.sqrt((ds.features * ds.features).sum(axis=1)).max())
    return ClassStats(
        counts=tuple(int(c) for c in counts),
        m_min=int(counts.min()),
        input_radius=radius,
    )


def require_all_classes(ds: Dataset) -> ClassStats:
    stats = class_stats(ds)
    missing = [j for j, c in enumerate(stats.counts) if c == 0]
    if missing:
        raise ValueError(f"classes with no samples: {missing}")
    return stats


def save_blobs_csv(ds: Dataset, seed: int, path) -> None:
    """CSV export: metadata header (d, d_y, seed), then feature rows + label."""
    with open(path, "w", encoding="utf-8") as f:
        f.write("d,d_y,seed\n")
        f.write(f"{ds.dim},{ds.d_y},{seed}\n")
        for row, label in zip(ds.features, ds.labels):
            f.write(",".join(repr(float(v)) for v in row) + f",{int(label)}\n")


def load_blobs_csv(path) -> tuple[Dataset, int]:
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().strip()
        if header != "d,d_y,seed":
            raise ValueError(f"unexpected CSV header {header!r}")
        d, d_y, seed = (int(v) for v in f.readline().strip().split(","))
        feats = []
        labels = []
        for line in f:
            parts = line.strip().split(",")
            if len(parts) != d + 1:
                raise ValueError(f"row has {len(parts)} fields, expected {d + 1}")
            feats.append([float(v) for v in parts[:d]])
            labels.append(int(parts[d]))
    return Dataset(features=np.array(feats), labels=np.array(labels), d_y=d_y), seed
