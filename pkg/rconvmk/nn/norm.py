"""
Normalization layers and the NST denoiser.

- ``sample_norm``: non-parametric per-sample standardization over (C, H, W),
  population variance, eps under the square root.
- ``batch_norm``: per-channel batch normalization with affine scale/shift and
  momentum-updated running statistics (unbiased running variance).
- ``nst_forward``: soft_threshold(batch_norm(sample_norm(x))), tau = 1e-4.

Both normalizations backpropagate through their batch/sample statistics.
"""

import threading

import numpy as np

from rconvmk.engine.tensor import Function, Parameter, Tensor
from rconvmk.errors import ArgumentError, ShapeError
from rconvmk.nn.functional import DEFAULT_TAU, soft_threshold
from rconvmk.nn.module import Identity, Module

DEFAULT_EPS = 1e-5
DEFAULT_MOMENTUM = 0.1

# running-statistic updates are serialized across evaluation/training threads
_running_stats_lock = threading.Lock()


# ============================================================
# Sample normalization
# ============================================================
class SampleNormFn(Function):
    def forward(self, x, eps: float = DEFAULT_EPS):
        axes = tuple(range(1, x.ndim))
        mu = x.mean(axis=axes, keepdims=True)
        centered = x - mu
        var = (centered * centered).mean(axis=axes, keepdims=True)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = centered * inv
        self.save(xhat, inv, axes)
        return xhat.astype(x.dtype, copy=False)

    def backward(self, grad):
        xhat, inv, axes = self.saved
        g_mean = grad.mean(axis=axes, keepdims=True)
        gx_mean = (grad * xhat).mean(axis=axes, keepdims=True)
        return (inv * (grad - g_mean - xhat * gx_mean),)


def sample_norm(x: Tensor, eps: float = DEFAULT_EPS) -> Tensor:
    """Standardize each sample over all of its non-batch axes."""
    if x.ndim < 2 or x.size == 0:
        raise ShapeError(f"sample_norm expects [N, ...] with non-empty samples, got {x.shape}")
    return SampleNormFn.apply(x, eps=float(eps))


# ============================================================
# Batch normalization
# ============================================================
class BatchNormFn(Function):
    """
    Per-channel affine normalization with given statistics.

    ``batch_stats=True`` means ``mean``/``var`` were computed from ``x`` itself,
    so the backward pass includes their dependence on x.
    """

    def forward(self, x, gamma, beta, mean=None, var=None, eps: float = DEFAULT_EPS,
                batch_stats: bool = True):
        shape = (1, -1) + (1,) * (x.ndim - 2)
        inv = (1.0 / np.sqrt(var + eps)).reshape(shape)
        xhat = (x - mean.reshape(shape)) * inv
        self.save(xhat, inv, gamma.reshape(shape), batch_stats)
        return (xhat * gamma.reshape(shape) + beta.reshape(shape)).astype(x.dtype, copy=False)

    def backward(self, grad):
        xhat, inv, gamma, batch_stats = self.saved
        axes = (0,) + tuple(range(2, grad.ndim))
        d_gamma = (grad * xhat).sum(axis=axes)
        d_beta = grad.sum(axis=axes)
        d_xhat = grad * gamma
        if batch_stats:
            dx = inv * (d_xhat - d_xhat.mean(axis=axes, keepdims=True)
                        - xhat * (d_xhat * xhat).mean(axis=axes, keepdims=True))
        else:
            dx = d_xhat * inv
        return dx, d_gamma, d_beta


class BatchNorm2d(Module):
    """Batch normalization over (N, H, W) per channel, affine enabled."""

    def __init__(self, channels: int, eps: float = DEFAULT_EPS,
                 momentum: float = DEFAULT_MOMENTUM, dtype=np.float32):
        super().__init__()
        if eps <= 0:
            raise ArgumentError(f"eps must be > 0, got {eps}")
        self.channels = channels
        self.eps = float(eps)
        self.momentum = float(momentum)
        self.weight = Parameter(np.ones(channels, dtype=dtype))
        self.bias = Parameter(np.zeros(channels, dtype=dtype))
        self.register_buffer("running_mean", np.zeros(channels, dtype=dtype))
        self.register_buffer("running_var", np.ones(channels, dtype=dtype))

    # NST field names for the affine parameters
    @property
    def bn_gamma(self) -> Parameter:
        return self.weight

    @property
    def bn_beta(self) -> Parameter:
        return self.bias

    def forward(self, x: Tensor) -> Tensor:
        return batch_norm(x, self)

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.channels})"


def batch_norm(x: Tensor, s: BatchNorm2d) -> Tensor:
    """
    Train mode normalizes by batch statistics and updates the running
    statistics with momentum; eval mode uses the running statistics.
    """
    if x.ndim != 4 or x.shape[1] != s.channels:
        raise ShapeError(f"batch_norm expects [N, {s.channels}, H, W], got {x.shape}")

    if not s.training:
        return BatchNormFn.apply(
            x, s.weight, s.bias,
            mean=s.running_mean.astype(x.dtype), var=s.running_var.astype(x.dtype),
            eps=s.eps, batch_stats=False,
        )

    count = x.shape[0] * x.shape[2] * x.shape[3]
    if count < 2:
        raise ShapeError(f"batch_norm in train mode needs N*H*W >= 2 per channel, got {count}")
    mean = x.data.mean(axis=(0, 2, 3))
    var = x.data.var(axis=(0, 2, 3))
    with _running_stats_lock:
        m = s.momentum
        s.running_mean = ((1 - m) * s.running_mean + m * mean).astype(s.running_mean.dtype)
        unbiased = var * (count / (count - 1))
        s.running_var = ((1 - m) * s.running_var + m * unbiased).astype(s.running_var.dtype)
    return BatchNormFn.apply(x, s.weight, s.bias, mean=mean, var=var, eps=s.eps, batch_stats=True)


# ============================================================
# NST
# ============================================================
class NSTState(BatchNorm2d):
    """
    State of the normalized-soft-thresholding operator: the inner batch
    norm's affine parameters and running statistics plus the threshold tau.
    """

    def __init__(self, channels: int, tau: float = DEFAULT_TAU, eps: float = DEFAULT_EPS,
                 momentum: float = DEFAULT_MOMENTUM, dtype=np.float32):
        super().__init__(channels, eps=eps, momentum=momentum, dtype=dtype)
        if tau < 0:
            raise ArgumentError(f"tau must be >= 0, got {tau}")
        self.tau = float(tau)

    def forward(self, x: Tensor) -> Tensor:
        return nst_forward(x, self)

    def __repr__(self) -> str:
        return f"NSTState({self.channels}, tau={self.tau:g})"


def nst_forward(x: Tensor, s: NSTState) -> Tensor:
    return soft_threshold(batch_norm(sample_norm(x, s.eps), s), s.tau)


class SampleNorm(Module):
    """Non-parametric layer norm (the LN-only denoiser)."""

    def __init__(self, eps: float = DEFAULT_EPS):
        super().__init__()
        self.eps = float(eps)

    def forward(self, x: Tensor) -> Tensor:
        return sample_norm(x, self.eps)


class SoftThreshold(Module):
    def __init__(self, tau: float = DEFAULT_TAU):
        super().__init__()
        if tau < 0:
            raise ArgumentError(f"tau must be >= 0, got {tau}")
        self.tau = float(tau)

    def forward(self, x: Tensor) -> Tensor:
        return soft_threshold(x, self.tau)


def make_denoiser(kind: str, channels: int, tau: float = DEFAULT_TAU,
                  dtype=np.float32) -> Module:
    """Build the denoiser named ``kind``: nst | ln | st | none."""
    if kind == "nst":
        return NSTState(channels, tau=tau, dtype=dtype)
    if kind == "ln":
        return SampleNorm()
    if kind == "st":
        return SoftThreshold(tau)
    if kind == "none":
        return Identity()
    raise ArgumentError(f"unknown denoiser kind: {kind}")
