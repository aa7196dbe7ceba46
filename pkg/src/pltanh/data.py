"""Dataset parsers, synthetic data and the k-fold splitter.

Images are always returned as float arrays of shape (N, H, W, C) scaled to
[0, 1]; labels as int64 class ids.

Expected directory layout under a dataset root::

    <root>/mnist/train-images-idx3-ubyte[.gz]
    <root>/mnist/train-labels-idx1-ubyte[.gz]
    <root>/fashion_mnist/train-images-idx3-ubyte[.gz]
    <root>/fashion_mnist/train-labels-idx1-ubyte[.gz]
    <root>/cifar10/data_batch_1.bin ... data_batch_5.bin
"""
from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR_RECORD = 3073
CIFAR_SIDE = 32


class DatasetFormatError(ValueError):
    """Malformed or inconsistent dataset file."""


@dataclass(frozen=True)
class Dataset:
    images: np.ndarray
    labels: np.ndarray
    name: str
    classes: int

    def __post_init__(self):
        if self.images.shape[0] != self.labels.shape[0]:
            raise DatasetFormatError(
                f"{self.name}: {self.images.shape[0]} images but {self.labels.shape[0]} labels"
            )
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.classes):
            raise DatasetFormatError(f"{self.name}: label outside [0, {self.classes})")

    def __len__(self) -> int:
        return self.labels.shape[0]

    def subset(self, n: int) -> "Dataset":
        """First ``n`` samples."""
        if n > len(self):
            raise ValueError(f"subset of {n} requested from {len(self)} samples")
        return Dataset(self.images[:n], self.labels[:n], self.name, self.classes)

    def astype(self, dtype) -> "Dataset":
        return Dataset(self.images.astype(dtype), self.labels, self.name, self.classes)


def _read_bytes(path) -> bytes:
    path = Path(path)
    with path.open("rb") as fh:
        head = fh.read(2)
    opener = gzip.open if head == b"\x1f\x8b" else open
    with opener(path, "rb") as fh:
        return fh.read()


def parse_idx_images(raw: bytes, source: str = "<bytes>") -> np.ndarray:
    if len(raw) < 16:
        raise DatasetFormatError(f"{source}: truncated IDX image header")
    magic, n, rows, cols = struct.unpack(">IIII", raw[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise DatasetFormatError(f"{source}: bad IDX image magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}")
    expected = 16 + n * rows * cols
    if len(raw) < expected:
        raise DatasetFormatError(f"{source}: truncated IDX image data ({len(raw)} of {expected} bytes)")
    pixels = np.frombuffer(raw, dtype=np.uint8, count=n * rows * cols, offset=16)
    return pixels.reshape(n, rows, cols, 1)


def parse_idx_labels(raw: bytes, source: str = "<bytes>") -> np.ndarray:
    if len(raw) < 8:
        raise DatasetFormatError(f"{source}: truncated IDX label header")
    magic, n = struct.unpack(">II", raw[:8])
    if magic != IDX_LABELS_MAGIC:
        raise DatasetFormatError(f"{source}: bad IDX label magic 0x{magic:08x}, expected 0x{IDX_LABELS_MAGIC:08x}")
    if len(raw) < 8 + n:
        raise DatasetFormatError(f"{source}: truncated IDX label data ({len(raw)} of {8 + n} bytes)")
    return np.frombuffer(raw, dtype=np.uint8, count=n, offset=8).astype(np.int64)


def encode_idx_images(images: np.ndarray) -> bytes:
    """Inverse of :func:`parse_idx_images` for uint8 (N, rows, cols[, 1]) arrays."""
    images = np.asarray(images, dtype=np.uint8)
    n, rows, cols = images.shape[:3]
    return struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols) + images.tobytes()


def encode_idx_labels(labels: Sequence[int]) -> bytes:
    labels = np.asarray(labels, dtype=np.uint8)
    return struct.pack(">II", IDX_LABELS_MAGIC, labels.size) + labels.tobytes()


def load_idx(images_path, labels_path, name: str = "mnist", classes: int = 10, dtype=np.float32) -> Dataset:
    """Load an IDX image/label file pair (plain or gzip-compressed)."""
    images = parse_idx_images(_read_bytes(images_path), str(images_path))
    labels = parse_idx_labels(_read_bytes(labels_path), str(labels_path))
    if images.shape[0] != labels.shape[0]:
        raise DatasetFormatError(
            f"count mismatch: {images_path} has {images.shape[0]} images, {labels_path} has {labels.shape[0]} labels"
        )
    return Dataset(images.astype(dtype) / dtype(255.0), labels, name, classes)


def parse_cifar10(raw: bytes, source: str = "<bytes>") -> Tuple[np.ndarray, np.ndarray]:
    if len(raw) % CIFAR_RECORD:
        raise DatasetFormatError(f"{source}: length {len(raw)} is not a multiple of {CIFAR_RECORD}")
    records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    labels = records[:, 0].astype(np.int64)
    # channel-planar R, G, B planes -> (N, 32, 32, 3)
    images = records[:, 1:].reshape(-1, 3, CIFAR_SIDE, CIFAR_SIDE).transpose(0, 2, 3, 1)
    return images, labels


def encode_cifar10(images: np.ndarray, labels: Sequence[int]) -> bytes:
    images = np.asarray(images, dtype=np.uint8)
    planes = images.transpose(0, 3, 1, 2).reshape(images.shape[0], -1)
    labels = np.asarray(labels, dtype=np.uint8)[:, None]
    return np.concatenate([labels, planes], axis=1).tobytes()


def load_cifar10(batch_paths: Sequence, dtype=np.float32) -> Dataset:
    images, labels = [], []
    for path in batch_paths:
        im, lb = parse_cifar10(_read_bytes(path), str(path))
        images.append(im)
        labels.append(lb)
    if not images:
        raise DatasetFormatError("no CIFAR-10 batch files given")
    return Dataset(np.concatenate(images).astype(dtype) / dtype(255.0), np.concatenate(labels), "cifar10", 10)


def _find(directory: Path, stem: str) -> Path:
    for candidate in (directory / stem, directory / (stem + ".gz")):
        if candidate.exists():
            return candidate
    raise FileNotFoundError(f"missing {stem}[.gz] in {directory}")


def load_named(name: str, root, dtype=np.float32) -> Dataset:
    """Load a dataset by name from the documented directory layout."""
    root = Path(root)
    if name in ("mnist", "fashion_mnist"):
        d = root / name
        return load_idx(_find(d, "train-images-idx3-ubyte"), _find(d, "train-labels-idx1-ubyte"), name, 10, dtype)
    if name == "cifar10":
        d = root / "cifar10"
        paths = [_find(d, f"data_batch_{i}.bin") for i in range(1, 6)]
        return load_cifar10(paths, dtype)
    raise ValueError(f"no loader for dataset {name!r}")


def synthetic_blobs(
    n: int,
    classes: int,
    image_shape: Tuple[int, int, int] = (28, 28, 1),
    seed: int = 0,
    noise: float = 0.05,
    dtype=np.float32,
) -> Dataset:
    """Class-conditional Gaussian bumps plus pixel noise.

    Class k is a Gaussian intensity bump centred at its own location (and, for
    multi-channel images, its own channel mix).  Labels cycle 0..K-1 before
    shuffling, so class counts differ by at most one.
    """
    if n < classes:
        raise ValueError(f"need n >= classes, got n={n}, classes={classes}")
    h, w, c = image_shape
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:h, 0:w]
    sigma = max(h, w) / 6.0
    templates = np.empty((classes, h, w, c))
    for k in range(classes):
        cy, cx = rng.uniform(0.2, 0.8, size=2) * (h - 1, w - 1)
        bump = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sigma**2))
        mix = rng.uniform(0.3, 1.0, size=c)
        templates[k] = bump[..., None] * mix
    labels = rng.permutation(np.arange(n) % classes)
    images = templates[labels] + rng.normal(0.0, noise, size=(n, h, w, c))
    images = np.clip(images, 0.0, 1.0).astype(dtype)
    return Dataset(images, labels.astype(np.int64), "synthetic", classes)


@dataclass(frozen=True)
class FoldSplit:
    fold: int
    train: np.ndarray
    validation: np.ndarray


def kfold_split(n: int, k: int = 5, seed: int = 0) -> List[FoldSplit]:
    """Shuffle 0..n-1 once and cut it into ``k`` contiguous validation chunks."""
    if n < k:
        raise ValueError(f"cannot split {n} samples into {k} folds")
    order = np.random.default_rng(seed).permutation(n)
    chunks = np.array_split(order, k)
    folds = []
    for i, val in enumerate(chunks):
        train = np.concatenate([c for j, c in enumerate(chunks) if j != i])
        folds.append(FoldSplit(i, train, val))
    return folds


def one_hot(labels: np.ndarray, classes: int, dtype=np.float32) -> np.ndarray:
    out = np.zeros((labels.shape[0], classes), dtype=dtype)
    out[np.arange(labels.shape[0]), labels] = 1
    return out


def batch_iter(
    dataset: Dataset,
    indices: np.ndarray,
    batch_size: int,
    shuffle_seed: Optional[int] = None,
) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
    """Yield ``(images, one_hot_labels)`` covering ``indices`` once; the last batch may be short."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    indices = np.asarray(indices)
    if shuffle_seed is not None:
        indices = np.random.default_rng(shuffle_seed).permutation(indices)
    for start in range(0, indices.shape[0], batch_size):
        idx = indices[start:start + batch_size]
        yield dataset.images[idx], one_hot(dataset.labels[idx], dataset.classes, dataset.images.dtype)
