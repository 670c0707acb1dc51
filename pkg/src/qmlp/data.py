"""MNIST ingestion, average-pool down-sampling and pixel-to-angle mapping.

IDX layout (big-endian): int32 magic, int32 count, then for images int32
rows, int32 cols, followed by unsigned bytes. Files may be gzip-compressed.
"""
from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049
ENV_MNIST_DIR = "QMLP_MNIST_DIR"

# 4000 train / 1000 test images shuffled from a public 5000-image MNIST subset
BUNDLED_MNIST = Path(__file__).parent / "datasets" / "mnist5k"

_SPLITS = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


@dataclass(frozen=True)
class Dataset:
    images: np.ndarray   # (count, k, k) in [0, 1]
    labels: np.ndarray   # (count,) int64 in 0..9

    def __post_init__(self):
        if self.images.ndim != 3 or self.images.shape[1] != self.images.shape[2]:
            raise DataError(f"images must have shape (count, k, k), got {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise DataError(f"{len(self.images)} images but {len(self.labels)} labels")
        if self.images.size and (self.images.min() < 0.0 or self.images.max() > 1.0):
            raise DataError("pixels must lie in [0, 1]")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() > 9):
            raise DataError("labels must lie in 0..9")

    @property
    def k(self) -> int:
        return self.images.shape[1]

    def __len__(self):
        return len(self.labels)

    def subset(self, n: int | None) -> "Dataset":
        if n is None or n >= len(self):
            return self
        return Dataset(self.images[:n], self.labels[:n])

    def downsample(self, k: int) -> "Dataset":
        return Dataset(downsample(self.images, k), self.labels)

    def angles(self) -> np.ndarray:
        return to_angles(self.images)


def _read(path: Path) -> bytes:
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise DataError(f"{path}: cannot read ({e.strerror})") from e
    if raw[:2] == b"\x1f\x8b":
        try:
            raw = gzip.decompress(raw)
        except (OSError, EOFError) as e:
            raise DataError(f"{path}: corrupt gzip stream ({e})") from e
    return raw


def _header(raw: bytes, path, fmt: str, magic: int):
    size = struct.calcsize(fmt)
    if len(raw) >= 4 and (found := struct.unpack_from(">I", raw)[0]) != magic:
        raise DataError(f"{path}: bad magic {found} at offset 0 (expected {magic})")
    if len(raw) < size:
        raise DataError(f"{path}: truncated header at offset {len(raw)} (need {size} bytes)")
    return struct.unpack_from(fmt, raw, 0)[1:], size


def load_idx(images_path, labels_path) -> Dataset:
    """Parse an image/label IDX pair; pixels are scaled to [0, 1] by /255."""
    img_raw = _read(images_path)
    (count, rows, cols), off = _header(img_raw, images_path, ">IIII", IMAGE_MAGIC)
    need = off + count * rows * cols
    if len(img_raw) < need:
        raise DataError(f"{images_path}: truncated pixel data at offset {len(img_raw)} "
                        f"(expected {need} bytes)")
    if rows != cols:
        raise DataError(f"{images_path}: non-square images {rows}x{cols} at offset 8")
    pixels = np.frombuffer(img_raw, dtype=np.uint8, count=count * rows * cols, offset=off)

    lab_raw = _read(labels_path)
    (n_labels,), loff = _header(lab_raw, labels_path, ">II", LABEL_MAGIC)
    if n_labels != count:
        raise DataError(f"{labels_path}: count {n_labels} at offset 4 does not match "
                        f"{count} images in {images_path}")
    if len(lab_raw) < loff + n_labels:
        raise DataError(f"{labels_path}: truncated label data at offset {len(lab_raw)} "
                        f"(expected {loff + n_labels} bytes)")
    labels = np.frombuffer(lab_raw, dtype=np.uint8, count=n_labels, offset=loff)
    if n_labels and labels.max() > 9:
        bad = int(np.argmax(labels > 9))
        raise DataError(f"{labels_path}: label {labels[bad]} at offset {loff + bad} exceeds 9")
    images = pixels.reshape(count, rows, cols).astype(np.float64) / 255.0
    return Dataset(images, labels.astype(np.int64))


def write_idx(pixels, labels, images_path, labels_path) -> None:
    """Write uint8 images (count, rows, cols) and labels as IDX, gzipped if the name ends in .gz."""
    pixels = np.asarray(pixels, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    if pixels.ndim != 3 or len(pixels) != len(labels):
        raise DataError(f"need (count, rows, cols) pixels and matching labels, got "
                        f"{pixels.shape} / {labels.shape}")
    img = struct.pack(">IIII", IMAGE_MAGIC, *pixels.shape) + pixels.tobytes()
    lab = struct.pack(">II", LABEL_MAGIC, len(labels)) + labels.tobytes()
    for path, blob in ((images_path, img), (labels_path, lab)):
        path = Path(path)
        if path.suffix == ".gz":
            # mtime=0 keeps the archive byte-reproducible
            blob = gzip.compress(blob, mtime=0)
        path.write_bytes(blob)


def mnist_dir(explicit=None) -> Path:
    """--mnist-dir, then $QMLP_MNIST_DIR, then the bundled subset."""
    for cand in (explicit, os.environ.get(ENV_MNIST_DIR)):
        if cand:
            return Path(cand)
    return BUNDLED_MNIST


def _locate(directory: Path, stem: str) -> Path:
    for name in (stem, stem + ".gz"):
        if (directory / name).exists():
            return directory / name
    raise DataError(f"{directory}: neither {stem} nor {stem}.gz found")


def load_mnist(directory=None, split: str = "train") -> Dataset:
    if split not in _SPLITS:
        raise ConfigError(f"split must be 'train' or 'test', got {split!r}")
    d = mnist_dir(directory)
    img, lab = _SPLITS[split]
    return load_idx(_locate(d, img), _locate(d, lab))


def downsample(image: np.ndarray, k: int) -> np.ndarray:
    """Average-pool 28x28 image(s) to k x k.

    k=3 first crops to rows/cols 0..26 so 9x9 blocks tile exactly.
    Accepts a single image or a stack (..., 28, 28).
    """
    if k not in (2, 3, 4):
        raise ConfigError(f"input size must be 2, 3 or 4, got {k}")
    image = np.asarray(image, dtype=np.float64)
    if image.shape[-2:] != (28, 28):
        raise DataError(f"expected 28x28 images, got {image.shape[-2:]}")
    b = 27 // k if k == 3 else 28 // k
    crop = image[..., : k * b, : k * b]
    lead = crop.shape[:-2]
    return crop.reshape(lead + (k, b, k, b)).mean(axis=(-3, -1))


def to_angles(image: np.ndarray) -> np.ndarray:
    """Row-major flatten, angle = pi * pixel. A stack (count, k, k) gives (count, k*k)."""
    image = np.asarray(image, dtype=np.float64)
    if image.size and (not np.all(np.isfinite(image)) or image.min() < 0.0 or image.max() > 1.0):
        raise DataError("pixels must lie in [0, 1]")
    if image.ndim == 3:
        return np.pi * image.reshape(len(image), -1)
    return np.pi * image.ravel()


def synthetic(kind: str, n: int, seed: int = 0, k: int = 2) -> Dataset:
    """Small labeled sets for tests.

    two_gaussians: class 0 pixels near 0.25, class 1 near 0.75, each clipped
    to within 0.15 of its center, so the mean-pixel threshold 0.5 separates
    the classes with every pixel at least 0.1 from it (margin 0.2 between
    classes per pixel).
    parity: binary pixels, label = number of lit pixels mod 2.
    constant: every pixel 0.5, label 0.
    """
    if n < 1:
        raise ConfigError(f"dataset size must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    if kind == "two_gaussians":
        labels = rng.integers(0, 2, n)
        centers = np.where(labels == 1, 0.75, 0.25)[:, None, None]
        noise = np.clip(rng.normal(0.0, 0.07, (n, k, k)), -0.15, 0.15)
        images = centers + noise
    elif kind == "parity":
        images = rng.integers(0, 2, (n, k, k)).astype(np.float64)
        labels = images.reshape(n, -1).sum(axis=1).astype(np.int64) % 2
    elif kind == "constant":
        images = np.full((n, k, k), 0.5)
        labels = np.zeros(n, dtype=np.int64)
    else:
        raise ConfigError(f"unknown synthetic dataset {kind!r}")
    return Dataset(images, labels.astype(np.int64))
