"""
IDX (MNIST) reader.

Header: big-endian u32 magic (0x00000803 images, 0x00000801 labels), then one
big-endian u32 per dimension, then raw ubyte data. ``.gz`` files are
decompressed transparently.
"""

import gzip
import logging
from pathlib import Path
from typing import Tuple, Union

import numpy as np

from rconvmk.data.datasets import Dataset
from rconvmk.errors import DatasetError

logger = logging.getLogger(__name__)

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}

PathLike = Union[str, Path]


def _read_bytes(path: Path) -> bytes:
    if not path.is_file():
        raise DatasetError(f"IDX file not found: {path}")
    if path.suffix == ".gz":
        with gzip.open(path, "rb") as fh:
            return fh.read()
    return path.read_bytes()


def read_idx(path: PathLike, expected_magic: int) -> np.ndarray:
    """Decode one IDX file into a uint8 array shaped by its header."""
    path = Path(path)
    raw = _read_bytes(path)
    if len(raw) < 4:
        raise DatasetError(f"{path}: truncated IDX header")
    magic = int(np.frombuffer(raw, dtype=">u4", count=1)[0])
    if magic != expected_magic:
        raise DatasetError(f"{path}: bad magic 0x{magic:08x}, expected 0x{expected_magic:08x}")

    ndim = magic & 0xFF
    header_len = 4 + 4 * ndim
    if len(raw) < header_len:
        raise DatasetError(f"{path}: truncated IDX header")
    dims = tuple(int(d) for d in np.frombuffer(raw, dtype=">u4", count=ndim, offset=4))
    expected = int(np.prod(dims))
    if len(raw) - header_len < expected:
        raise DatasetError(f"{path}: truncated payload, {len(raw) - header_len} of {expected} bytes")
    return np.frombuffer(raw, dtype=np.uint8, count=expected, offset=header_len).reshape(dims)


def load_idx(images_path: PathLike, labels_path: PathLike, split: str = "train",
             name: str = "mnist", num_classes: int = 10) -> Dataset:
    """Pair an IDX image file with its label file; pixels stay uint8 (x / 255 per batch)."""
    images = read_idx(images_path, IMAGES_MAGIC)
    labels = read_idx(labels_path, LABELS_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise DatasetError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    n, h, w = images.shape
    logger.info("Loaded %s/%s: %d images %dx%d", name, split, n, h, w)
    return Dataset(images.reshape(n, 1, h, w), labels.astype(np.int64), num_classes, split, name)


def mnist_paths(root: PathLike, split: str) -> Tuple[Path, Path]:
    """Standard MNIST file names under ``root``, plain or gzipped."""
    if split not in MNIST_FILES:
        raise DatasetError(f"unknown split {split!r}")
    root = Path(root)
    found = []
    for base in MNIST_FILES[split]:
        for candidate in (root / base, root / f"{base}.gz", root / "mnist" / base, root / "mnist" / f"{base}.gz"):
            if candidate.is_file():
                found.append(candidate)
                break
        else:
            raise DatasetError(f"MNIST file {base}[.gz] not found under {root}")
    return found[0], found[1]


def load_mnist(root: PathLike, split: str = "train") -> Dataset:
    images_path, labels_path = mnist_paths(root, split)
    return load_idx(images_path, labels_path, split=split, name="mnist")
