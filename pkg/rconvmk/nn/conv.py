"""
2-D convolution
===============
Direct cross-correlation lowered to im2col + matmul per group.

Covers Conv2d (groups=1), PWConv (k=1) and DWConv (groups=C_in with a
channel multiplier). Windows come from ``sliding_window_view`` over the
zero-padded input; the backward pass scatters column gradients back with one
strided add per kernel tap.
"""

from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from rconvmk.engine.tensor import Function, Parameter, Tensor
from rconvmk.errors import ShapeError
from rconvmk.nn.module import Module, he_normal


def same_padding(k: int) -> int:
    """Padding keeping the spatial size at stride 1: (k - 1) / 2, odd k only."""
    if k % 2 == 0:
        raise ShapeError(f"'same' padding needs an odd kernel, got k={k}")
    return (k - 1) // 2


def output_size(size: int, k: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - k) // stride + 1


@dataclass
class Conv2dParams:
    weight: Tensor                      # [C_out, C_in/groups, k_h, k_w]
    bias: Optional[Tensor] = None       # [C_out]
    stride: int = 1
    padding: int = 0
    groups: int = 1

    def __post_init__(self):
        c_out, _, _, _ = self.weight.shape
        if c_out % self.groups:
            raise ShapeError(f"C_out={c_out} not divisible by groups={self.groups}")
        if self.bias is not None and self.bias.shape != (c_out,):
            raise ShapeError(f"bias shape {self.bias.shape} != ({c_out},)")


class Conv2dFunction(Function):
    def forward(self, x, w, stride: int = 1, padding: int = 0, groups: int = 1):
        if x.ndim != 4 or w.ndim != 4:
            raise ShapeError(f"conv2d expects NCHW input and 4-D weight, got {x.shape} and {w.shape}")
        n, c, h, wd = x.shape
        c_out, c_per_group, kh, kw = w.shape
        if c % groups or c_out % groups:
            raise ShapeError(f"channels C_in={c}, C_out={c_out} not divisible by groups={groups}")
        if c_per_group != c // groups:
            raise ShapeError(f"weight expects {c_per_group * groups} input channels, got {c}")
        if h + 2 * padding < kh or wd + 2 * padding < kw:
            raise ShapeError(f"input {h}x{wd} (pad {padding}) smaller than kernel {kh}x{kw}")

        xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x
        ho = output_size(h, kh, stride, padding)
        wo = output_size(wd, kw, stride, padding)
        # N, Ho, Wo, C, kh, kw
        windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
        windows = windows.transpose(0, 2, 3, 1, 4, 5)

        o_per_group = c_out // groups
        rows = n * ho * wo
        out = np.empty((rows, c_out), dtype=x.dtype)
        cols = []
        for g in range(groups):
            col = windows[:, :, :, g * c_per_group:(g + 1) * c_per_group].reshape(rows, -1)
            w_g = w[g * o_per_group:(g + 1) * o_per_group].reshape(o_per_group, -1)
            out[:, g * o_per_group:(g + 1) * o_per_group] = col @ w_g.T
            cols.append(col)

        self.save(cols, w, xp.shape, (n, ho, wo), stride, padding, groups)
        return out.reshape(n, ho, wo, c_out).transpose(0, 3, 1, 2)

    def backward(self, grad):
        cols, w, padded_shape, (n, ho, wo), stride, padding, groups = self.saved
        c_out, c_per_group, kh, kw = w.shape
        o_per_group = c_out // groups
        g_rows = grad.transpose(0, 2, 3, 1).reshape(n * ho * wo, c_out)

        dw = np.empty_like(w)
        dxp = np.zeros(padded_shape, dtype=grad.dtype)
        for g in range(groups):
            go = g_rows[:, g * o_per_group:(g + 1) * o_per_group]
            w_g = w[g * o_per_group:(g + 1) * o_per_group].reshape(o_per_group, -1)
            dw[g * o_per_group:(g + 1) * o_per_group] = (go.T @ cols[g]).reshape(o_per_group, c_per_group, kh, kw)
            dcol = (go @ w_g).reshape(n, ho, wo, c_per_group, kh, kw).transpose(0, 3, 1, 2, 4, 5)
            dst = dxp[:, g * c_per_group:(g + 1) * c_per_group]
            for i in range(kh):
                for j in range(kw):
                    dst[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += dcol[..., i, j]

        if padding:
            dxp = dxp[:, :, padding:-padding, padding:-padding]
        return dxp, dw


def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None,
           stride: int = 1, padding: int = 0, groups: int = 1) -> Tensor:
    out = Conv2dFunction.apply(x, weight, stride=stride, padding=padding, groups=groups)
    if bias is not None:
        out = out + bias.reshape(1, -1, 1, 1)
    return out


def conv2d_forward(x: Tensor, p: Conv2dParams) -> Tensor:
    """
    Cross-correlate ``x`` [N, C_in, H, W] with ``p``.

    Output spatial size is (H + 2*pad - k) / stride + 1 per axis. Gradients
    flow to the input, the weight and the bias.
    """
    return conv2d(x, p.weight, p.bias, p.stride, p.padding, p.groups)


class Conv2d(Module):
    """Conv2d / PWConv / DWConv layer with He-normal weights and zero bias."""

    def __init__(
        self,
        c_in: int,
        c_out: int,
        k: int,
        stride: int = 1,
        padding: Union[int, str] = "same",
        groups: int = 1,
        bias: bool = True,
        rng: Optional[np.random.Generator] = None,
        dtype=np.float32,
    ):
        super().__init__()
        if c_in % groups or c_out % groups:
            raise ShapeError(f"C_in={c_in}, C_out={c_out} not divisible by groups={groups}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.c_in, self.c_out, self.k = c_in, c_out, k
        self.stride = stride
        self.padding = same_padding(k) if padding == "same" else int(padding)
        self.groups = groups
        fan_in = (c_in // groups) * k * k
        self.weight = Parameter(he_normal(rng, (c_out, c_in // groups, k, k), fan_in, dtype))
        self.bias = Parameter(np.zeros(c_out, dtype=dtype)) if bias else None

    @property
    def params(self) -> Conv2dParams:
        return Conv2dParams(self.weight, self.bias, self.stride, self.padding, self.groups)

    def forward(self, x: Tensor) -> Tensor:
        return conv2d_forward(x, self.params)

    def __repr__(self) -> str:
        return (f"Conv2d({self.c_in}, {self.c_out}, k={self.k}, stride={self.stride}, "
                f"groups={self.groups})")


def conv_output_shape(shape: Tuple[int, int, int, int], c_out: int, k: int,
                      stride: int, padding: int) -> Tuple[int, int, int, int]:
    n, _, h, w = shape
    return n, c_out, output_size(h, k, stride, padding), output_size(w, k, stride, padding)
