"""
Stateless layer functions: soft thresholding, relu, cross-entropy, linear,
global average pooling.
"""

from typing import Optional, Sequence

import numpy as np

from rconvmk.engine.tensor import Function, Tensor, matmul
from rconvmk.errors import ArgumentError, ShapeError

DEFAULT_TAU = 1e-4


class SoftThresholdFn(Function):
    def forward(self, x, tau: float = DEFAULT_TAU):
        mag = np.abs(x)
        self.save(mag > tau)
        return np.where(mag >= tau, np.sign(x) * (mag - tau), 0).astype(x.dtype)

    def backward(self, grad):
        (live,) = self.saved
        return (grad * live,)


def soft_threshold(x: Tensor, tau: float = DEFAULT_TAU) -> Tensor:
    """
    y = sgn(x) * (|x| - tau) where |x| >= tau, else 0.

    The gradient is 1 where |x| > tau and 0 elsewhere, including |x| == tau.
    """
    if tau < 0:
        raise ArgumentError(f"soft_threshold needs tau >= 0, got {tau}")
    return SoftThresholdFn.apply(x, tau=float(tau))


def relu(x: Tensor) -> Tensor:
    return x.relu()


class CrossEntropyFn(Function):
    def forward(self, logits, labels: np.ndarray):
        n = logits.shape[0]
        shifted = logits - logits.max(axis=1, keepdims=True)
        log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        log_probs = shifted - log_z
        self.save(np.exp(log_probs), labels)
        return np.asarray(-log_probs[np.arange(n), labels].mean(), dtype=logits.dtype)

    def backward(self, grad):
        probs, labels = self.saved
        n = probs.shape[0]
        d = probs.copy()
        d[np.arange(n), labels] -= 1
        return (d * (grad / n),)


def cross_entropy(logits: Tensor, labels: Sequence[int]) -> Tensor:
    """Mean -log softmax(logits)[label] over the batch, max-shifted."""
    if logits.ndim != 2:
        raise ShapeError(f"cross_entropy expects [N, K] logits, got {logits.shape}")
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    n, k = logits.shape
    if labels.shape[0] != n:
        raise ShapeError(f"{labels.shape[0]} labels for {n} logit rows")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ArgumentError(f"labels must lie in [0, {k}), got range [{labels.min()}, {labels.max()}]")
    return CrossEntropyFn.apply(logits, labels=labels)


def linear_forward(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """x [N, in] @ weight.T [in, out] (+ bias)."""
    out = matmul(x, weight.T)
    if bias is not None:
        out = out + bias
    return out


def global_avg_pool(x: Tensor) -> Tensor:
    """[N, C, H, W] -> [N, C]."""
    if x.ndim != 4:
        raise ShapeError(f"global_avg_pool expects NCHW, got {x.shape}")
    return x.mean(axis=(2, 3))
