"""
RConv block
===========
T_c (square PWConv, DCT init) -> NST -> multi-kernel T_s -> NST -> T_r (PWConv).

Channels after T_c are frequency ordered: index 0 is the lowest frequency.
T_s splits them into m consecutive groups (``partition_channels``); group j is
filtered by a kernel set theta_j of shape [a^2, 1, k_j, k_j] shared by every
channel of the group, so each input channel yields a^2 output channels.
Larger kernels go to lower frequencies (MK); RMK mirrors the assignment.

Variants
--------
    MK         multi-kernel T_s + NST (default)
    UK         single kernel k + NST
    RMK        mirrored kernel assignment + NST
    DMK        multi-kernel, no denoiser
    LMK        multi-kernel, sample norm only
    SMK        multi-kernel, soft threshold only
    LST        single kernel k, soft threshold only
    Conv2d     plain k x k convolution
    Conv2d-MK  per-group plain convolutions with the multi-kernel sizes
"""

import logging
from enum import Enum
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from rconvmk.blocks.dct import cyclic_dct2_filters, dct_matrix
from rconvmk.blocks.partition import group_slices, partition_channels
from rconvmk.engine.tensor import Parameter, Tensor, concat
from rconvmk.errors import ArgumentError, BlockConfigError, ShapeError
from rconvmk.nn.conv import Conv2d, conv2d, same_padding
from rconvmk.nn.functional import DEFAULT_TAU
from rconvmk.nn.module import Module, ModuleList
from rconvmk.nn.norm import make_denoiser

logger = logging.getLogger(__name__)

SeedLike = Union[int, Sequence[int]]


class Variant(str, Enum):
    MK = "MK"
    UK = "UK"
    RMK = "RMK"
    DMK = "DMK"
    LMK = "LMK"
    SMK = "SMK"
    LST = "LST"
    CONV2D = "Conv2d"
    CONV2D_MK = "Conv2d-MK"

    @property
    def multi_kernel(self) -> bool:
        return self not in (Variant.UK, Variant.LST, Variant.CONV2D)

    @property
    def spatial(self) -> bool:
        """True for the plain-convolution variants that skip T_c / T_r."""
        return self in (Variant.CONV2D, Variant.CONV2D_MK)

    @property
    def denoiser(self) -> str:
        return {
            Variant.DMK: "none",
            Variant.LMK: "ln",
            Variant.SMK: "st",
            Variant.LST: "st",
        }.get(self, "nst")


DEFAULT_SPLIT_RATIOS = {3: [1, 3, 2], 5: [1, 2, 1]}


class RConvConfig(BaseModel):
    """Configuration of one block. Kernel sizes and split ratio default from k."""

    model_config = ConfigDict(extra="forbid")

    c_in: int = Field(ge=1)
    c_out: int = Field(ge=1)
    k: int = 3
    a: int = Field(default=2, ge=1)
    stride: int = Field(default=1, ge=1)
    m: int = Field(default=3, ge=1)
    kernel_sizes: Optional[List[int]] = None
    split_ratio: Optional[List[int]] = None
    variant: Variant = Variant.MK
    resize_position: str = "after"
    tau: float = Field(default=DEFAULT_TAU, ge=0)

    @model_validator(mode="after")
    def _resolve(self) -> "RConvConfig":
        if self.k < 1 or self.k % 2 == 0:
            raise BlockConfigError(f"k must be odd, got {self.k}")
        if self.resize_position not in ("before", "after"):
            raise BlockConfigError(f"resize_position must be 'before' or 'after', got {self.resize_position!r}")

        if not self.variant.multi_kernel:
            name = self.variant.value
            if self.kernel_sizes is not None and list(self.kernel_sizes) != [self.k]:
                raise BlockConfigError(f"{name} uses the single kernel k={self.k}, got kernel_sizes {self.kernel_sizes}")
            if self.split_ratio is not None and len(self.split_ratio) != 1:
                raise BlockConfigError(f"{name} has one channel group, got split_ratio {self.split_ratio}")
            if "m" in self.model_fields_set and self.m != 1:
                raise BlockConfigError(f"{name} has one kernel, got m={self.m}")
            self.kernel_sizes, self.split_ratio, self.m = [self.k], [1], 1
            return self

        if self.kernel_sizes is None:
            if self.m != 3:
                raise BlockConfigError(f"kernel_sizes must be given when m={self.m}")
            self.kernel_sizes = [self.k + 2, self.k, 1]
        self.m = len(self.kernel_sizes)
        if self.split_ratio is None:
            self.split_ratio = list(DEFAULT_SPLIT_RATIOS.get(self.k, [1] * self.m))

        ks = self.kernel_sizes
        if any(kj < 1 or kj % 2 == 0 for kj in ks):
            raise BlockConfigError(f"kernel_sizes must all be odd, got {ks}")
        if any(ks[j] <= ks[j + 1] for j in range(len(ks) - 1)):
            raise BlockConfigError(f"kernel_sizes must be strictly decreasing, got {ks}")
        if self.k not in ks:
            raise BlockConfigError(f"k={self.k} must be one of kernel_sizes {ks}")
        if len(self.split_ratio) != self.m:
            raise BlockConfigError(f"split_ratio {self.split_ratio} needs {self.m} entries")
        if any(r <= 0 for r in self.split_ratio):
            raise BlockConfigError(f"split_ratio entries must be positive, got {self.split_ratio}")
        return self


# ============================================================
# Spatial transform
# ============================================================
class SharedDepthwise(Module):
    """
    One T_s branch: a^2 filters of size k x k applied to every channel of its
    group. [N, C_j, H, W] -> [N, a^2 * C_j, H', W'], channel c's outputs
    contiguous.
    """

    def __init__(self, k: int, a: int, stride: int = 1, dtype=np.float32):
        super().__init__()
        self.k, self.a, self.stride = k, a, stride
        self.padding = same_padding(k)
        filters = cyclic_dct2_filters(k, a * a)
        self.weight = Parameter(filters[:, None, :, :].astype(dtype))

    def forward(self, x: Tensor) -> Tensor:
        n, c, h, w = x.shape
        out = conv2d(x.reshape(n * c, 1, h, w), self.weight, stride=self.stride, padding=self.padding)
        _, _, ho, wo = out.shape
        return out.reshape(n, c * self.a * self.a, ho, wo)

    def __repr__(self) -> str:
        return f"SharedDepthwise(k={self.k}, a={self.a})"


class MultiKernelConv2d(Module):
    """Conv2d-MK: input and output channels split by the same ratio, one Conv2d per group."""

    def __init__(self, cfg: RConvConfig, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        in_counts = partition_channels(cfg.c_in, cfg.split_ratio)
        out_counts = partition_channels(cfg.c_out, cfg.split_ratio)
        self.in_slices = group_slices(in_counts)
        self.branches = ModuleList(
            Conv2d(ci, co, kj, stride=cfg.stride, bias=False, rng=rng, dtype=dtype)
            for ci, co, kj in zip(in_counts, out_counts, cfg.kernel_sizes)
        )

    def forward(self, x: Tensor) -> Tensor:
        return concat([branch(x[:, sl]) for branch, sl in zip(self.branches, self.in_slices)], axis=1)


# ============================================================
# Block
# ============================================================
class RConvBlock(Module):
    def __init__(self, cfg: RConvConfig, rng_seed: SeedLike = 0, dtype=np.float32):
        super().__init__()
        self.config = cfg
        self.variant = cfg.variant
        rng = np.random.default_rng(rng_seed)
        a2 = cfg.a * cfg.a

        self.t_c = None
        self.t_r = None
        self.kernel_sizes: List[int] = []
        self.group_counts: List[int] = []

        if self.variant is Variant.CONV2D:
            self.conv = Conv2d(cfg.c_in, cfg.c_out, cfg.k, stride=cfg.stride, bias=False, rng=rng, dtype=dtype)
            self.kernel_sizes, self.group_counts = [cfg.k], [cfg.c_in]
            return
        if self.variant is Variant.CONV2D_MK:
            self.conv = MultiKernelConv2d(cfg, rng, dtype)
            self.kernel_sizes = list(cfg.kernel_sizes)
            self.group_counts = partition_channels(cfg.c_in, cfg.split_ratio)
            return

        if cfg.resize_position == "before":
            if cfg.c_out % a2:
                raise BlockConfigError(
                    f"resize_position=before needs c_out divisible by a^2: c_out={cfg.c_out}, a^2={a2}"
                )
            c_s = cfg.c_out // a2
            self.t_r = self._resize(cfg.c_in, c_s, rng, dtype)
        else:
            c_s = cfg.c_in
        self.c_s = c_s

        self.t_c = Conv2d(c_s, c_s, 1, bias=False, rng=rng, dtype=dtype)
        self.t_c.weight.data = dct_matrix(c_s)[:, :, None, None].astype(dtype)
        self.nst_c = make_denoiser(self.variant.denoiser, c_s, cfg.tau, dtype)

        counts = partition_channels(c_s, cfg.split_ratio)
        kernels = list(cfg.kernel_sizes)
        if self.variant is Variant.RMK:
            counts, kernels = counts[::-1], kernels[::-1]
        self.kernel_sizes, self.group_counts = kernels, counts
        self.slices = group_slices(counts)
        self.t_s = ModuleList(SharedDepthwise(kj, cfg.a, cfg.stride, dtype) for kj in kernels)
        self.nst_s = make_denoiser(self.variant.denoiser, a2 * c_s, cfg.tau, dtype)

        if cfg.resize_position == "after":
            self.t_r = self._resize(a2 * c_s, cfg.c_out, rng, dtype)

    @staticmethod
    def _resize(c_in: int, c_out: int, rng: np.random.Generator, dtype) -> Conv2d:
        return Conv2d(c_in, c_out, 1, bias=True, rng=rng, dtype=dtype)

    def branch_outputs(self, x: Tensor) -> List[Tensor]:
        """T_s branch outputs before concatenation, in frequency order."""
        return [branch(x[:, sl]) for branch, sl in zip(self.t_s, self.slices)]

    def forward(self, x: Tensor) -> Tensor:
        cfg = self.config
        if x.ndim != 4 or x.shape[1] != cfg.c_in:
            raise ShapeError(f"block expects [N, {cfg.c_in}, H, W], got {x.shape}")
        if self.variant.spatial:
            return self.conv(x)

        if cfg.resize_position == "before":
            x = self.t_r(x)
        x = self.nst_c(self.t_c(x))
        x = self.nst_s(concat(self.branch_outputs(x), axis=1))
        if cfg.resize_position == "after":
            x = self.t_r(x)
        return x

    def __repr__(self) -> str:
        cfg = self.config
        return (f"RConvBlock({cfg.c_in}->{cfg.c_out}, variant={self.variant.value}, "
                f"kernels={self.kernel_sizes}, groups={self.group_counts})")


def build_block(cfg: RConvConfig, rng_seed: SeedLike = 0, dtype=np.float32) -> RConvBlock:
    block = RConvBlock(cfg, rng_seed, dtype)
    logger.debug("built %r", block)
    return block


def block_forward(b: RConvBlock, x: Tensor, mode: Optional[str] = None) -> Tensor:
    """Run ``b`` on ``x``; ``mode`` ("train" / "eval") switches the block first."""
    if mode is not None:
        if mode not in ("train", "eval"):
            raise ArgumentError(f"mode must be 'train' or 'eval', got {mode!r}")
        b.train(mode == "train")
    return b(x)


def extra_params_closed_form(cfg: RConvConfig) -> int:
    """a^2 * sum of k_j^2 over the branches whose kernel differs from k."""
    if cfg.variant.spatial or not cfg.variant.multi_kernel:
        return 0
    return cfg.a * cfg.a * sum(kj * kj for kj in cfg.kernel_sizes if kj != cfg.k)


def count_params(b: RConvBlock) -> Dict[str, int]:
    def size(module: Optional[Module]) -> int:
        return 0 if module is None else module.num_parameters()

    if b.variant.spatial:
        t_s = size(b.conv)
    else:
        t_s = sum(size(branch) for branch in b.t_s)
    return {
        "total": b.num_parameters(),
        "t_r": size(b.t_r),
        "t_c": size(b.t_c),
        "t_s": t_s,
        "extra_vs_lst": extra_params_closed_form(b.config),
    }


def block_summary(b: RConvBlock) -> List[Dict[str, object]]:
    """One row per T_s branch: kernel, channel slice and output channel count."""
    if b.variant is Variant.CONV2D:
        out_counts = [b.config.c_out]
    elif b.variant is Variant.CONV2D_MK:
        out_counts = [branch.c_out for branch in b.conv.branches]
    else:
        out_counts = [b.config.a ** 2 * c for c in b.group_counts]

    rows = []
    for j, (kj, sl, c_out) in enumerate(zip(b.kernel_sizes, group_slices(b.group_counts), out_counts)):
        rows.append({
            "branch": j,
            "kernel": kj,
            "channels": f"{sl.start}:{sl.stop}",
            "in_channels": sl.stop - sl.start,
            "out_channels": c_out,
        })
    return rows
