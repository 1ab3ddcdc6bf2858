"""Dataset ingestion: IDX (MNIST), CIFAR-10 binary batches, synthetic blobs.

Pixel bytes are scaled to [0, 1] by dividing by 255; no further input
normalization is applied (recorded in run manifests).
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    BadRecordSizeError,
    DataError,
    TruncatedPayloadError,
    UnsupportedDtypeError,
)
from .tensors import ActTensor4

IDX_UBYTE = 0x08
CIFAR_RECORD_BYTES = 3073  # 1 label byte + 3 * 32 * 32 pixel bytes


@dataclass(frozen=True)
class LabeledDataset:
    """Images plus integer class labels in [0, class_count)."""

    images: ActTensor4
    labels: np.ndarray
    class_count: int

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.ndim != 1 or len(labels) != self.images.dims[0]:
            raise ValueError("labels must be one per sample")
        if self.class_count < 1:
            raise ValueError("class_count must be >= 1")
        if labels.size and (labels.min() < 0 or labels.max() >= self.class_count):
            raise ValueError("labels out of range [0, class_count)")
        labels.flags.writeable = False
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.images.dims[0]

    def subset(self, indices: np.ndarray) -> "LabeledDataset":
        return LabeledDataset(
            ActTensor4(self.images.data[indices], self.images.source_tag),
            self.labels[indices],
            self.class_count,
        )


def _read_file(path) -> bytes:
    path = Path(path)
    if path.suffix == ".gz":
        with gzip.open(path, "rb") as fh:
            return fh.read()
    return path.read_bytes()


def read_idx(path):
    """Parse a big-endian IDX file.

    Returns an ``ActTensor4`` of shape (N, 1, H, W) with pixels scaled to
    [0, 1] for 3D image files, or a 1D int label vector for 1D files.
    """
    raw = _read_file(path)
    if len(raw) < 4:
        raise TruncatedPayloadError(f"{path}: file shorter than the IDX header")
    if raw[0] != 0 or raw[1] != 0:
        raise BadMagicError(f"{path}: bad magic {raw[0]:02x} {raw[1]:02x}")
    dtype_code, ndim = raw[2], raw[3]
    if dtype_code != IDX_UBYTE:
        raise UnsupportedDtypeError(f"{path}: dtype code 0x{dtype_code:02x}")
    header_end = 4 + 4 * ndim
    if len(raw) < header_end:
        raise TruncatedPayloadError(f"{path}: dimension list cut short")
    dims = struct.unpack(f">{ndim}i", raw[4:header_end])
    count = 1
    for d in dims:
        count *= d
    if len(raw) - header_end < count:
        raise TruncatedPayloadError(
            f"{path}: payload has {len(raw) - header_end} bytes, dims need {count}"
        )
    if len(raw) - header_end > count:
        raise TruncatedPayloadError(f"{path}: trailing bytes after payload")
    payload = np.frombuffer(raw, dtype=np.uint8, offset=header_end)
    if ndim == 1:
        return payload.astype(np.int64)
    if ndim == 3:
        n, h, w = dims
        images = payload.reshape(n, 1, h, w).astype(np.float64) / 255.0
        return ActTensor4(images, "raw")
    raise UnsupportedDtypeError(f"{path}: unsupported dimension count {ndim}")


def read_cifar_batch(path) -> LabeledDataset:
    """Parse one CIFAR-10 binary batch (channel-planar RGB 32x32 records)."""
    raw = _read_file(path)
    if len(raw) == 0 or len(raw) % CIFAR_RECORD_BYTES != 0:
        raise BadRecordSizeError(
            f"{path}: {len(raw)} bytes is not a positive multiple of {CIFAR_RECORD_BYTES}"
        )
    records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD_BYTES)
    labels = records[:, 0].astype(np.int64)
    images = records[:, 1:].reshape(-1, 3, 32, 32).astype(np.float64) / 255.0
    return LabeledDataset(ActTensor4(images, "raw"), labels, 10)


def load_mnist(data_dir) -> tuple[LabeledDataset, LabeledDataset]:
    """Load MNIST train and test splits from IDX files under ``data_dir``.

    Accepts the canonical file names with or without a .gz suffix.
    """
    data_dir = Path(data_dir)
    names = {
        "train_images": "train-images-idx3-ubyte",
        "train_labels": "train-labels-idx1-ubyte",
        "test_images": "t10k-images-idx3-ubyte",
        "test_labels": "t10k-labels-idx1-ubyte",
    }
    parts = {}
    for key, name in names.items():
        candidates = [data_dir / name, data_dir / (name + ".gz")]
        found = next((p for p in candidates if p.exists()), None)
        if found is None:
            raise DataError(f"missing MNIST file {name} under {data_dir}")
        parts[key] = read_idx(found)
    train = LabeledDataset(parts["train_images"], parts["train_labels"], 10)
    test = LabeledDataset(parts["test_images"], parts["test_labels"], 10)
    return train, test


def load_cifar10(data_dir) -> tuple[LabeledDataset, LabeledDataset]:
    """Load CIFAR-10 train (5 batches) and test splits from ``data_dir``."""
    data_dir = Path(data_dir)
    batches = []
    for i in range(1, 6):
        path = data_dir / f"data_batch_{i}.bin"
        if not path.exists():
            raise DataError(f"missing CIFAR-10 file {path.name} under {data_dir}")
        batches.append(read_cifar_batch(path))
    test_path = data_dir / "test_batch.bin"
    if not test_path.exists():
        raise DataError(f"missing CIFAR-10 file {test_path.name} under {data_dir}")
    images = np.concatenate([b.images.data for b in batches])
    labels = np.concatenate([b.labels for b in batches])
    train = LabeledDataset(ActTensor4(images, "raw"), labels, 10)
    return train, read_cifar_batch(test_path)


def synthetic_blob_images(n_per_class: int, class_count: int = 3, hw: int = 28,
                          noise: float = 0.05, seed: int = 2024) -> LabeledDataset:
    """Deterministic image dataset of per-class random patterns plus noise.

    Each class has a fixed uniform-random mean pattern; samples add Gaussian
    pixel noise and are clipped back to [0, 1]. Linearly separable for any
    noise well below the inter-pattern distance, so small CNNs interpolate
    within a few epochs.
    """
    rng = np.random.default_rng([seed, class_count, hw])
    patterns = rng.uniform(0.0, 1.0, size=(class_count, hw, hw))
    n = n_per_class * class_count
    labels = np.repeat(np.arange(class_count), n_per_class)
    images = patterns[labels][:, None, :, :] + rng.normal(0.0, noise, (n, 1, hw, hw))
    images = np.clip(images, 0.0, 1.0)
    order = rng.permutation(n)
    return LabeledDataset(
        ActTensor4(images[order], "raw"), labels[order], class_count
    )


def blob_points(groups: int, n_per_group: int, sigma: float = 0.1,
                separation: float = 1.0, seed: int = 0,
                dim: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Isotropic Gaussian blobs around mutually separated centers.

    Centers sit at ``separation`` times distinct unit axes, so every pair of
    centers is ``separation * sqrt(2)`` apart. Returns (points, labels).
    """
    if dim is None:
        dim = max(2, groups)
    if dim < groups:
        raise ValueError("dim must be >= groups for guaranteed separation")
    rng = np.random.default_rng(seed)
    centers = separation * np.eye(groups, dim)
    labels = np.repeat(np.arange(groups), n_per_group)
    points = centers[labels] + rng.normal(0.0, sigma, (len(labels), dim))
    return points, labels
