"""
In-memory labeled image datasets.

Loaders keep raw ``uint8`` pixels; batches are converted to float32 in [0, 1]
on the way out, so a loaded dataset costs about its file size.
"""

from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence, Tuple, Union

import numpy as np

from rconvmk.errors import DatasetError


@dataclass
class Dataset:
    images: np.ndarray              # [N, C, H, W], uint8 or float in [0, 1]
    labels: np.ndarray              # [N] int64 in [0, num_classes)
    num_classes: int
    split: str = "train"
    name: str = "dataset"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if self.images.ndim != 4:
            raise DatasetError(f"{self.name}: images must be [N, C, H, W], got {self.images.shape}")
        if self.images.shape[0] != self.labels.shape[0]:
            raise DatasetError(
                f"{self.name}: {self.images.shape[0]} images but {self.labels.shape[0]} labels"
            )
        if self.split not in ("train", "test"):
            raise DatasetError(f"{self.name}: split must be 'train' or 'test', got {self.split!r}")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise DatasetError(
                f"{self.name}: labels outside [0, {self.num_classes}): "
                f"[{self.labels.min()}, {self.labels.max()}]"
            )
        if self.images.dtype != np.uint8 and self.images.size:
            lo, hi = float(self.images.min()), float(self.images.max())
            if lo < 0.0 or hi > 1.0:
                raise DatasetError(f"{self.name}: float pixels outside [0, 1]: [{lo}, {hi}]")

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def image_shape(self) -> Tuple[int, int, int]:
        return tuple(self.images.shape[1:])

    def pixels(self, index=slice(None), dtype=np.float32) -> np.ndarray:
        """Float pixels in [0, 1] for ``index``."""
        x = self.images[index]
        if x.dtype == np.uint8:
            return x.astype(dtype) / dtype(255)
        return x.astype(dtype, copy=True)

    def take(self, indices: Sequence[int]) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(self.images[indices], self.labels[indices], self.num_classes,
                       self.split, self.name, dict(self.meta))

    def subset(self, n: Optional[int], seed: int = 0) -> "Dataset":
        """First ``n`` samples after a seeded shuffle; ``None`` keeps everything."""
        if n is None or n >= len(self):
            return self
        if n < 1:
            raise DatasetError(f"subset size must be >= 1, got {n}")
        order = np.random.default_rng(seed).permutation(len(self))
        return self.take(np.sort(order[:n]))

    def with_images(self, images: np.ndarray, name: Optional[str] = None) -> "Dataset":
        return Dataset(images, self.labels, self.num_classes, self.split,
                       name or self.name, dict(self.meta))

    def batches(
        self,
        batch_size: int,
        shuffle: bool = False,
        seed: Union[int, Sequence[int]] = 0,
        augment: bool = False,
        crop_padding: int = 4,
        dtype=np.float32,
    ) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
        if batch_size < 1:
            raise DatasetError(f"batch_size must be >= 1, got {batch_size}")
        rng = np.random.default_rng(seed)
        order = rng.permutation(len(self)) if shuffle else np.arange(len(self))
        for start in range(0, len(self), batch_size):
            idx = order[start:start + batch_size]
            x = self.pixels(idx, dtype)
            if augment:
                x = augment_batch(x, rng, crop_padding=crop_padding)
            yield x, self.labels[idx]


def augment_batch(x: np.ndarray, rng: np.random.Generator, flip: bool = True,
                  crop_padding: int = 4) -> np.ndarray:
    """Random horizontal flip and reflect-padded random crop, per image."""
    n, _, h, w = x.shape
    out = x.copy()
    if flip:
        flips = rng.random(n) < 0.5
        out[flips] = out[flips, :, :, ::-1]
    if crop_padding > 0:
        p = crop_padding
        padded = np.pad(out, ((0, 0), (0, 0), (p, p), (p, p)), mode="reflect")
        offsets = rng.integers(0, 2 * p + 1, size=(n, 2))
        for i, (dy, dx) in enumerate(offsets):
            out[i] = padded[i, :, dy:dy + h, dx:dx + w]
    return out


def synthetic_dataset(
    n: int,
    shape: Tuple[int, int, int] = (1, 28, 28),
    num_classes: int = 10,
    seed: int = 0,
    split: str = "train",
    noise: float = 0.15,
) -> Dataset:
    """
    Deterministic class-conditional images: one smooth template per class
    (fixed across splits) plus per-sample noise drawn from ``seed``.
    """
    if n < 1:
        raise DatasetError(f"synthetic dataset size must be >= 1, got {n}")
    c, h, w = shape
    templates = np.random.default_rng(1234).random((num_classes, c, h, w))
    # 3x3 box smoothing so classes differ in low-frequency structure
    padded = np.pad(templates, ((0, 0), (0, 0), (1, 1), (1, 1)), mode="edge")
    smooth = sum(padded[:, :, i:i + h, j:j + w] for i in range(3) for j in range(3)) / 9.0

    rng = np.random.default_rng(seed)
    labels = rng.permutation(np.arange(n) % num_classes)
    images = smooth[labels] + noise * rng.standard_normal((n, c, h, w))
    pixels = np.clip(np.rint(images * 255), 0, 255).astype(np.uint8)
    return Dataset(pixels, labels, num_classes, split, "synthetic")
