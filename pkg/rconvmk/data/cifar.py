"""
CIFAR-10 / CIFAR-100 binary-version reader.

CIFAR-10 records are 3073 bytes (label, 3072 pixels); CIFAR-100 records are
3074 bytes (coarse label, fine label, 3072 pixels). Pixels are three 32x32
planes (R, G, B), row-major. Coarse labels are ignored.
"""

import logging
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np

from rconvmk.data.datasets import Dataset
from rconvmk.errors import DatasetError

logger = logging.getLogger(__name__)

IMAGE_BYTES = 3 * 32 * 32

# variant -> (label bytes, subdirectory, {split: file names})
CIFAR_LAYOUT: Dict[int, Tuple[int, str, Dict[str, List[str]]]] = {
    10: (1, "cifar-10-batches-bin", {
        "train": [f"data_batch_{i}.bin" for i in range(1, 6)],
        "test": ["test_batch.bin"],
    }),
    100: (2, "cifar-100-binary", {
        "train": ["train.bin"],
        "test": ["test.bin"],
    }),
}


def _resolve_files(root: Path, subdir: str, names: List[str]) -> List[Path]:
    for base in (root, root / subdir):
        paths = [base / name for name in names]
        if all(p.is_file() for p in paths):
            return paths
    raise DatasetError(f"CIFAR files not found under {root}; expected {', '.join(names)}")


def read_records(path: Path, label_bytes: int) -> Tuple[np.ndarray, np.ndarray]:
    """(uint8 images [N, 3, 32, 32], fine labels [N]) from one batch file."""
    record = label_bytes + IMAGE_BYTES
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size == 0 or raw.size % record:
        raise DatasetError(f"{path}: {raw.size} bytes is not a multiple of the {record}-byte record")
    rows = raw.reshape(-1, record)
    labels = rows[:, label_bytes - 1].astype(np.int64)
    images = rows[:, label_bytes:].reshape(-1, 3, 32, 32)
    return images, labels


def load_cifar(path: Union[str, Path], variant: int = 10, split: str = "train") -> Dataset:
    if variant not in CIFAR_LAYOUT:
        raise DatasetError(f"CIFAR variant must be 10 or 100, got {variant}")
    label_bytes, subdir, files = CIFAR_LAYOUT[variant]
    if split not in files:
        raise DatasetError(f"unknown split {split!r}")

    parts = [read_records(p, label_bytes) for p in _resolve_files(Path(path), subdir, files[split])]
    images = parts[0][0] if len(parts) == 1 else np.concatenate([p[0] for p in parts])
    labels = parts[0][1] if len(parts) == 1 else np.concatenate([p[1] for p in parts])
    logger.info("Loaded cifar%d/%s: %d images", variant, split, len(labels))
    return Dataset(images, labels, variant, split, f"cifar{variant}")
