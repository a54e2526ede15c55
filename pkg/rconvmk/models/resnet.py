"""
Desk-scale residual classifiers.

    stem (Conv2d 3x3 -> BN -> ReLU)
    stages[s].blocks[b]: conv1 -> BN -> ReLU -> conv2 -> BN (+ shortcut) -> ReLU
    global average pool -> head (Linear)

conv1/conv2 are built with the chosen block variant; the stem and the 1x1
projection shortcuts stay plain convolutions. Stage s > 0 opens with a
stride-2 block. Every site draws its initial weights from an RNG keyed by
(seed, site name).
"""

import logging
import zlib
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from rconvmk.blocks.rconv import RConvBlock, RConvConfig, Variant, build_block, count_params
from rconvmk.engine.tensor import Tensor, no_grad
from rconvmk.errors import ArgumentError, DatasetError, ShapeError
from rconvmk.nn.conv import Conv2d
from rconvmk.nn.functional import DEFAULT_TAU, cross_entropy, global_avg_pool
from rconvmk.nn.linear import Linear, ReLU
from rconvmk.nn.module import Module, ModuleList, eval_mode
from rconvmk.nn.norm import BatchNorm2d

logger = logging.getLogger(__name__)


class ModelSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    widths: List[int] = Field(min_length=1)
    blocks_per_stage: int = Field(default=1, ge=1)
    variant: Variant = Variant.MK
    num_classes: int = Field(default=10, ge=2)
    input_shape: Tuple[int, int, int] = (1, 28, 28)
    skip: bool = True
    k: int = 3
    a: int = Field(default=2, ge=1)
    tau: float = Field(default=DEFAULT_TAU, ge=0)
    resize_position: str = "after"

    @field_validator("widths")
    @classmethod
    def _non_decreasing(cls, widths: List[int]) -> List[int]:
        if any(w < 1 for w in widths):
            raise ValueError(f"widths must be positive, got {widths}")
        if any(widths[i] > widths[i + 1] for i in range(len(widths) - 1)):
            raise ValueError(f"widths must be non-decreasing, got {widths}")
        return widths

    @model_validator(mode="after")
    def _input(self) -> "ModelSpec":
        if any(d < 1 for d in self.input_shape):
            raise ValueError(f"input_shape must be positive, got {self.input_shape}")
        return self

    def block_config(self, c_in: int, c_out: int, stride: int) -> RConvConfig:
        return RConvConfig(c_in=c_in, c_out=c_out, k=self.k, a=self.a, stride=stride,
                           variant=self.variant, tau=self.tau,
                           resize_position=self.resize_position)


PRESETS: Dict[str, Dict[str, object]] = {
    "tiny": {"widths": [8, 16, 32], "blocks_per_stage": 1, "num_classes": 10, "input_shape": (1, 28, 28)},
    "small": {"widths": [16, 32, 64], "blocks_per_stage": 2, "num_classes": 10, "input_shape": (3, 32, 32)},
}


def preset_spec(name: str, **overrides) -> ModelSpec:
    if name not in PRESETS:
        raise ArgumentError(f"unknown preset {name!r}; expected one of {sorted(PRESETS)}")
    return ModelSpec(**{**PRESETS[name], **overrides})


def site_seed(seed: int, name: str) -> List[int]:
    """RNG key for a named site; independent of every other site."""
    return [int(seed), zlib.crc32(name.encode("utf-8"))]


# ============================================================
# Layers
# ============================================================
class Shortcut(Module):
    """1x1 projection + BN used when a residual join changes shape."""

    def __init__(self, c_in: int, c_out: int, stride: int, seed, dtype=np.float32):
        super().__init__()
        self.conv = Conv2d(c_in, c_out, 1, stride=stride, bias=False,
                           rng=np.random.default_rng(seed), dtype=dtype)
        self.bn = BatchNorm2d(c_out, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        return self.bn(self.conv(x))


class BasicBlock(Module):
    def __init__(self, spec: ModelSpec, c_in: int, c_out: int, stride: int,
                 seed: int, prefix: str, dtype=np.float32):
        super().__init__()
        self.conv1 = build_block(spec.block_config(c_in, c_out, stride), site_seed(seed, f"{prefix}.conv1"), dtype)
        self.bn1 = BatchNorm2d(c_out, dtype=dtype)
        self.relu = ReLU()
        self.conv2 = build_block(spec.block_config(c_out, c_out, 1), site_seed(seed, f"{prefix}.conv2"), dtype)
        self.bn2 = BatchNorm2d(c_out, dtype=dtype)
        self.skip = spec.skip
        self.shortcut = None
        if spec.skip and (stride != 1 or c_in != c_out):
            self.shortcut = Shortcut(c_in, c_out, stride, site_seed(seed, f"{prefix}.shortcut"), dtype)

    def forward(self, x: Tensor) -> Tensor:
        out = self.bn2(self.conv2(self.relu(self.bn1(self.conv1(x)))))
        if self.skip:
            identity = x if self.shortcut is None else self.shortcut(x)
            if identity.shape != out.shape:
                raise ShapeError(f"residual join {identity.shape} vs {out.shape}")
            out = out + identity
        return self.relu(out)


class Stage(Module):
    def __init__(self, blocks: List[BasicBlock]):
        super().__init__()
        self.blocks = ModuleList(blocks)

    def forward(self, x: Tensor) -> Tensor:
        for block in self.blocks:
            x = block(x)
        return x


class Model(Module):
    def __init__(self, spec: ModelSpec, seed: int = 0, dtype=np.float32):
        super().__init__()
        self.spec = spec
        self.seed = int(seed)
        c0 = spec.input_shape[0]
        w0 = spec.widths[0]

        self.stem = Conv2d(c0, w0, 3, bias=False, rng=np.random.default_rng(site_seed(seed, "stem")), dtype=dtype)
        self.stem_bn = BatchNorm2d(w0, dtype=dtype)
        self.relu = ReLU()

        stages = []
        c_in = w0
        for s, width in enumerate(spec.widths):
            blocks = []
            for b in range(spec.blocks_per_stage):
                stride = 2 if (s > 0 and b == 0) else 1
                blocks.append(BasicBlock(spec, c_in, width, stride, seed, f"stages.{s}.blocks.{b}", dtype))
                c_in = width
            stages.append(Stage(blocks))
        self.stages = ModuleList(stages)
        self.head = Linear(spec.widths[-1], spec.num_classes,
                           rng=np.random.default_rng(site_seed(seed, "head")), dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 4 or tuple(x.shape[1:]) != tuple(self.spec.input_shape):
            raise ShapeError(f"model expects [N, {', '.join(map(str, self.spec.input_shape))}], got {x.shape}")
        x = self.relu(self.stem_bn(self.stem(x)))
        for stage in self.stages:
            x = stage(x)
        return self.head(global_avg_pool(x))


def build_model(spec: ModelSpec, seed: int = 0, dtype=np.float32) -> Model:
    model = Model(spec, seed, dtype)
    logger.info("Built %s model: widths=%s blocks/stage=%d params=%d",
                spec.variant.value, spec.widths, spec.blocks_per_stage, model.num_parameters())
    return model


def forward(model: Model, x: Tensor, mode: Optional[str] = None) -> Tensor:
    """Logits for ``x``; ``mode`` ("train" / "eval") switches the model first."""
    if mode is not None:
        if mode not in ("train", "eval"):
            raise ArgumentError(f"mode must be 'train' or 'eval', got {mode!r}")
        model.train(mode == "train")
    return model(x)


# ============================================================
# Evaluation
# ============================================================
def _batch_stats(model: Model, x: np.ndarray, y: np.ndarray) -> Tuple[float, int, int]:
    # grad mode is thread-local; each worker disables it itself
    with no_grad():
        logits = model(Tensor(x, dtype=model.dtype))
        loss = cross_entropy(logits, y).item() * len(y)
    scores = logits.data
    top1 = int((scores.argmax(axis=1) == y).sum())
    top5 = 0
    if scores.shape[1] >= 5:
        best5 = np.argpartition(-scores, 4, axis=1)[:, :5]
        top5 = int((best5 == y[:, None]).any(axis=1).sum())
    return loss, top1, top5


def evaluate(model: Model, dataset, batch_size: int = 256, workers: int = 1) -> Dict[str, Optional[float]]:
    """
    Top-1 (and top-5 for K >= 5) error in percent plus mean cross-entropy.

    Batches are sharded over ``workers`` threads; the reduction runs in batch
    order, so the metrics do not depend on the worker count.
    """
    if len(dataset) == 0:
        raise DatasetError("cannot evaluate on an empty dataset")
    batches = list(dataset.batches(batch_size, shuffle=False))

    with eval_mode(model):
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(lambda b: _batch_stats(model, *b), batches))
        else:
            results = [_batch_stats(model, x, y) for x, y in batches]

    n = len(dataset)
    loss = sum(r[0] for r in results) / n
    top1 = sum(r[1] for r in results)
    top5 = sum(r[2] for r in results)
    k = model.spec.num_classes
    return {
        "top1_error": 100.0 * (n - top1) / n,
        "top5_error": 100.0 * (n - top5) / n if k >= 5 else None,
        "loss": float(loss),
        "n": n,
    }


# ============================================================
# Reporting
# ============================================================
def conv_sites(model: Model) -> "OrderedDict[str, Module]":
    """Convolution sites by name: stem, every conv1/conv2/shortcut, head."""
    sites: "OrderedDict[str, Module]" = OrderedDict(stem=model.stem)
    for s, stage in enumerate(model.stages):
        for b, block in enumerate(stage.blocks):
            prefix = f"stages.{s}.blocks.{b}"
            sites[f"{prefix}.conv1"] = block.conv1
            sites[f"{prefix}.conv2"] = block.conv2
            if block.shortcut is not None:
                sites[f"{prefix}.shortcut"] = block.shortcut.conv
    sites["head"] = model.head
    return sites


def count_model_params(model: Model) -> List[Dict[str, object]]:
    """One row per site plus a ``total`` row."""
    rows = []
    for name, module in conv_sites(model).items():
        if isinstance(module, RConvBlock):
            row = {"site": name, "variant": module.variant.value, **count_params(module)}
        else:
            row = {"site": name, "variant": "plain", "total": module.num_parameters(),
                   "t_r": 0, "t_c": 0, "t_s": 0, "extra_vs_lst": 0}
        rows.append(row)
    rows.append({"site": "total", "variant": model.spec.variant.value, "total": model.num_parameters(),
                 "t_r": None, "t_c": None, "t_s": None, "extra_vs_lst": None})
    return rows
