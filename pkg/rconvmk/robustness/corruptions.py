"""
Desk-scale image corruptions.

Severity 1..5 maps to a fixed parameter per kind (severity 0 is the identity):

    kind            parameter                        1      2      3      4      5
    gaussian_noise  noise std                        0.04   0.08   0.12   0.18   0.26
    shot_noise      photons per unit intensity       60     25     12     5      3
    impulse_noise   salt-and-pepper fraction         0.03   0.06   0.09   0.17   0.27
    box_blur        box radius (reflect padding)     1      2      3      4      5
    contrast        factor about the image mean      0.4    0.3    0.2    0.1    0.05
    brightness      additive shift                   0.1    0.2    0.3    0.4    0.5

Random corruptions draw from an RNG keyed by (seed, image bytes), so equal
images receive equal corruptions. Outputs are clipped to [0, 1].
"""

import logging
import zlib
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from pydantic import BaseModel, ConfigDict, model_validator

from rconvmk.data.datasets import Dataset
from rconvmk.engine.tensor import Tensor
from rconvmk.errors import CorruptionError

logger = logging.getLogger(__name__)

SEVERITY_TABLES: Dict[str, List[float]] = {
    "gaussian_noise": [0.04, 0.08, 0.12, 0.18, 0.26],
    "shot_noise": [60, 25, 12, 5, 3],
    "impulse_noise": [0.03, 0.06, 0.09, 0.17, 0.27],
    "box_blur": [1, 2, 3, 4, 5],
    "contrast": [0.4, 0.3, 0.2, 0.1, 0.05],
    "brightness": [0.1, 0.2, 0.3, 0.4, 0.5],
}

MAX_SEVERITY = 5


class CorruptionSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: str
    severity: int
    seed: int = 0

    @model_validator(mode="after")
    def _check(self) -> "CorruptionSpec":
        if self.kind not in SEVERITY_TABLES:
            raise CorruptionError(f"unknown corruption {self.kind!r}; expected one of {', '.join(SEVERITY_TABLES)}")
        if not 0 <= self.severity <= MAX_SEVERITY:
            raise CorruptionError(f"severity must be in 0..{MAX_SEVERITY}, got {self.severity}")
        return self

    @property
    def parameter(self) -> Optional[float]:
        if self.severity == 0:
            return None
        return SEVERITY_TABLES[self.kind][self.severity - 1]


# ============================================================
# Per-image kernels: (image [C, H, W], parameter, rng) -> image
# ============================================================
def _gaussian(img: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    return img + sigma * rng.standard_normal(img.shape)


def _shot(img: np.ndarray, photons: float, rng: np.random.Generator) -> np.ndarray:
    return rng.poisson(img * photons) / photons


def _impulse(img: np.ndarray, amount: float, rng: np.random.Generator) -> np.ndarray:
    out = img.astype(np.float64, copy=True)
    hit = rng.random(img.shape) < amount
    salt = rng.random(img.shape) < 0.5
    out[hit & salt] = 1.0
    out[hit & ~salt] = 0.0
    return out


def _box_blur(img: np.ndarray, radius: float, rng: np.random.Generator) -> np.ndarray:
    r = int(radius)
    padded = np.pad(img, ((0, 0), (r, r), (r, r)), mode="reflect")
    windows = sliding_window_view(padded, (2 * r + 1, 2 * r + 1), axis=(1, 2))
    return windows.mean(axis=(-2, -1))


def _contrast(img: np.ndarray, factor: float, rng: np.random.Generator) -> np.ndarray:
    mean = img.mean()
    return mean + (img - mean) * factor


def _brightness(img: np.ndarray, shift: float, rng: np.random.Generator) -> np.ndarray:
    return img + shift


KERNELS: Dict[str, Callable[[np.ndarray, float, np.random.Generator], np.ndarray]] = {
    "gaussian_noise": _gaussian,
    "shot_noise": _shot,
    "impulse_noise": _impulse,
    "box_blur": _box_blur,
    "contrast": _contrast,
    "brightness": _brightness,
}


def image_rng(seed: int, key: bytes) -> np.random.Generator:
    return np.random.default_rng([int(seed), zlib.crc32(key), len(key)])


def corrupt_images(x: np.ndarray, spec: CorruptionSpec, keys: Optional[Sequence[bytes]] = None) -> np.ndarray:
    """
    Corrupt a float batch [N, C, H, W] in [0, 1].

    ``keys`` (one per image) seed the per-image noise; by default the image's
    own bytes are used.
    """
    x = np.asarray(x)
    if x.ndim != 4:
        raise CorruptionError(f"corrupt expects [N, C, H, W], got {x.shape}")
    if x.size and (x.min() < 0.0 or x.max() > 1.0):
        raise CorruptionError("corrupt expects pixels in [0, 1]")
    if spec.severity == 0:
        return x.copy()

    kernel = KERNELS[spec.kind]
    param = spec.parameter
    out = np.empty_like(x)
    for i in range(x.shape[0]):
        key = x[i].tobytes() if keys is None else keys[i]
        out[i] = np.clip(kernel(x[i].astype(np.float64), param, image_rng(spec.seed, key)), 0.0, 1.0)
    return out


def corrupt(x: Union[np.ndarray, Tensor], spec: CorruptionSpec) -> Union[np.ndarray, Tensor]:
    """Corrupt an image batch; a Tensor in gives a (detached) Tensor out."""
    if isinstance(x, Tensor):
        return Tensor(corrupt_images(x.data, spec), dtype=x.dtype)
    return corrupt_images(x, spec)


def corrupt_dataset(dataset: Dataset, spec: CorruptionSpec, batch_size: int = 256,
                    workers: int = 1) -> Dataset:
    """
    Corrupted float32 copy of ``dataset``. Per-image noise is keyed by the
    stored (raw) image bytes; batches may be processed by ``workers`` threads.
    """
    n = len(dataset)
    starts = list(range(0, n, batch_size))

    def run(start: int) -> np.ndarray:
        idx = np.arange(start, min(start + batch_size, n))
        keys = [dataset.images[i].tobytes() for i in idx]
        return corrupt_images(dataset.pixels(idx), spec, keys)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, starts))
    else:
        parts = [run(s) for s in starts]
    images = np.concatenate(parts) if parts else dataset.pixels()
    return dataset.with_images(images, name=f"{dataset.name}-{spec.kind}-{spec.severity}")


def distortion(x: np.ndarray, spec: CorruptionSpec) -> float:
    """Mean |corrupt(x) - x| over a batch."""
    return float(np.abs(corrupt_images(x, spec) - x).mean())
