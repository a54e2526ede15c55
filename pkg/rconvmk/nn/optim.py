"""
SGD with momentum and weight decay, plus a multi-step learning-rate schedule.

Update rule (per parameter):
    v <- momentum * v + grad + weight_decay * param
    param <- param - lr * v
"""

from typing import Dict, List, Optional, Sequence

import numpy as np

from rconvmk.engine.tensor import Parameter
from rconvmk.errors import ArgumentError, ShapeError


def sgd_step(
    params: Sequence[Parameter],
    grads: Sequence[Optional[np.ndarray]],
    lr: float,
    momentum: float = 0.0,
    weight_decay: float = 0.0,
    velocities: Optional[List[Optional[np.ndarray]]] = None,
) -> List[Optional[np.ndarray]]:
    """
    Apply one SGD step in place and return the velocity list.

    A ``None`` gradient leaves its parameter (and velocity) untouched.
    """
    if len(params) != len(grads):
        raise ShapeError(f"{len(params)} params but {len(grads)} grads")
    if velocities is None:
        velocities = [None] * len(params)

    for i, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            continue
        g = np.asarray(g)
        if g.shape != p.shape:
            raise ShapeError(f"grad {i} shape {g.shape} != param shape {p.shape}")
        step = g + weight_decay * p.data if weight_decay else g
        v = velocities[i]
        v = step.copy() if v is None else momentum * v + step
        velocities[i] = v
        p.data -= (lr * v).astype(p.dtype, copy=False)
    return velocities


class SGD:
    def __init__(self, params: Sequence[Parameter], lr: float, momentum: float = 0.9,
                 weight_decay: float = 0.0):
        if lr < 0:
            raise ArgumentError(f"lr must be >= 0, got {lr}")
        self.params = list(params)
        self.lr = float(lr)
        self.momentum = float(momentum)
        self.weight_decay = float(weight_decay)
        self.velocities: List[Optional[np.ndarray]] = [None] * len(self.params)
        self.step_count = 0

    def step(self) -> None:
        grads = [None if p.grad is None else p.grad.data for p in self.params]
        self.velocities = sgd_step(self.params, grads, self.lr, self.momentum,
                                   self.weight_decay, self.velocities)
        self.step_count += 1

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def state_dict(self) -> Dict[str, object]:
        return {
            "lr": self.lr,
            "momentum": self.momentum,
            "weight_decay": self.weight_decay,
            "step_count": self.step_count,
            "velocities": [None if v is None else v.copy() for v in self.velocities],
        }

    def load_state_dict(self, state: Dict[str, object]) -> None:
        velocities = list(state["velocities"])
        if len(velocities) != len(self.params):
            raise ShapeError(f"optimizer state has {len(velocities)} velocities, model has {len(self.params)} params")
        for i, (v, p) in enumerate(zip(velocities, self.params)):
            if v is not None and np.shape(v) != p.shape:
                raise ShapeError(f"velocity {i} shape {np.shape(v)} != param shape {p.shape}")
        self.lr = float(state["lr"])
        self.momentum = float(state["momentum"])
        self.weight_decay = float(state["weight_decay"])
        self.step_count = int(state["step_count"])
        self.velocities = [None if v is None else np.asarray(v, dtype=p.dtype).copy()
                           for v, p in zip(velocities, self.params)]


class MultiStepLR:
    """lr = base_lr * gamma ** (number of milestones <= epoch)."""

    def __init__(self, optimizer: SGD, milestones: Sequence[int], gamma: float = 0.1):
        self.optimizer = optimizer
        self.base_lr = optimizer.lr
        self.milestones = sorted(int(m) for m in milestones)
        self.gamma = float(gamma)

    def lr_at(self, epoch: int) -> float:
        passed = sum(1 for m in self.milestones if m <= epoch)
        return self.base_lr * self.gamma ** passed

    def set_epoch(self, epoch: int) -> float:
        self.optimizer.lr = self.lr_at(epoch)
        return self.optimizer.lr
