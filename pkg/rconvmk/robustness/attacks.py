"""
White-box l-inf attacks: FGSM, FFGSM and PGD.

All three share one ascent step

    x_next = project(x_cur + step * sign(grad_x loss(f(x_cur), y)))

where ``project`` clips to the eps-ball around the clean input and to [0, 1].
Gradients flow through every layer, including the NST statistics. The model
runs in eval mode while an attack is generated and gets its previous mode
back afterwards. Only the input receives a gradient; parameter .grad
fields are never touched.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from enum import Enum
from typing import Dict, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from rconvmk.engine.tensor import Tensor, backward, no_grad
from rconvmk.errors import AttackError, DatasetError
from rconvmk.models.resnet import Model
from rconvmk.nn.functional import cross_entropy
from rconvmk.nn.module import eval_mode

logger = logging.getLogger(__name__)

DEFAULT_EPSILON = 8 / 255
DEFAULT_STEP_SIZE = 2 / 255
DEFAULT_NUM_STEPS = 10
FFGSM_STEP_FACTOR = 1.25


class AttackKind(str, Enum):
    FGSM = "FGSM"
    FFGSM = "FFGSM"
    PGD = "PGD"


class AttackSpec(BaseModel):
    """
    ``step_size=None`` picks the kind's default: eps for FGSM, 1.25 * eps for
    FFGSM, 2/255 for PGD.
    """

    model_config = ConfigDict(extra="forbid")

    kind: AttackKind = AttackKind.PGD
    epsilon: float = DEFAULT_EPSILON
    step_size: Optional[float] = None
    num_steps: int = DEFAULT_NUM_STEPS
    random_start: bool = True
    seed: int = 0

    @model_validator(mode="after")
    def _check(self) -> "AttackSpec":
        if not 0.0 <= self.epsilon <= 1.0:
            raise AttackError(f"epsilon must lie in [0, 1], got {self.epsilon}")
        if self.step_size is not None and self.step_size <= 0:
            raise AttackError(f"step_size must be > 0, got {self.step_size}")
        if self.num_steps < 1:
            raise AttackError(f"num_steps must be >= 1, got {self.num_steps}")
        return self

    @property
    def effective_step(self) -> float:
        if self.step_size is not None:
            return self.step_size
        if self.kind is AttackKind.FGSM:
            return self.epsilon
        if self.kind is AttackKind.FFGSM:
            return FFGSM_STEP_FACTOR * self.epsilon
        return DEFAULT_STEP_SIZE

    @property
    def label(self) -> str:
        if self.kind is AttackKind.PGD:
            return f"PGD-{self.num_steps}"
        return self.kind.value


# ============================================================
# Primitives
# ============================================================
def project(x_adv: np.ndarray, x: np.ndarray, eps: float) -> np.ndarray:
    """
    Clip to [x - eps, x + eps] and [0, 1].

    Entries whose exact distance from ``x`` still exceeds eps after rounding
    are moved one ulp towards ``x`` until |x_adv - x| <= eps holds exactly.
    """
    out = np.clip(np.clip(x_adv, x - eps, x + eps), 0.0, 1.0).astype(x.dtype)
    x64 = x.astype(np.float64)
    for _ in range(8):
        over = np.abs(out.astype(np.float64) - x64) > eps
        if not over.any():
            break
        out[over] = np.nextafter(out[over], x[over])
    return out


def input_gradient(model: Model, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """d cross_entropy(model(x), y) / dx."""
    xt = Tensor(x, dtype=model.dtype, requires_grad=True)
    backward(cross_entropy(model(xt), y), inputs=[xt])
    return xt.grad.data


def _ascend(model: Model, x_cur: np.ndarray, y: np.ndarray, x: np.ndarray,
            step: float, eps: float) -> np.ndarray:
    grad = input_gradient(model, x_cur, y)
    return project(x_cur + step * np.sign(grad).astype(x_cur.dtype), x, eps)


def _check_input(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim != 4:
        raise AttackError(f"attack input must be [N, C, H, W], got {x.shape}")
    if x.size and (x.min() < 0.0 or x.max() > 1.0):
        raise AttackError("attack input must lie in [0, 1]")
    return x


# ============================================================
# Attacks
# ============================================================
def fgsm(model: Model, x: np.ndarray, y: np.ndarray, spec: AttackSpec) -> np.ndarray:
    x = _check_input(x).astype(model.dtype)
    with eval_mode(model):
        return _ascend(model, x, y, x, spec.epsilon, spec.epsilon)


def ffgsm(model: Model, x: np.ndarray, y: np.ndarray, spec: AttackSpec,
          rng: Optional[np.random.Generator] = None) -> np.ndarray:
    x = _check_input(x).astype(model.dtype)
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    eps = spec.epsilon
    with eval_mode(model):
        start = np.clip(x + rng.uniform(-eps, eps, size=x.shape).astype(x.dtype), 0.0, 1.0)
        return _ascend(model, start, y, x, spec.effective_step, eps)


def pgd(model: Model, x: np.ndarray, y: np.ndarray, spec: AttackSpec,
        rng: Optional[np.random.Generator] = None) -> np.ndarray:
    x = _check_input(x).astype(model.dtype)
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    eps, step = spec.epsilon, spec.effective_step
    with eval_mode(model):
        x_adv = x
        if spec.random_start:
            x_adv = project(x + rng.uniform(-eps, eps, size=x.shape).astype(x.dtype), x, eps)
        for _ in range(spec.num_steps):
            x_adv = _ascend(model, x_adv, y, x, step, eps)
        return x_adv


def attack(model: Model, x: np.ndarray, y: np.ndarray, spec: AttackSpec,
           rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Dispatch on ``spec.kind``."""
    if spec.kind is AttackKind.FGSM:
        return fgsm(model, x, y, spec)
    if spec.kind is AttackKind.FFGSM:
        return ffgsm(model, x, y, spec, rng)
    return pgd(model, x, y, spec, rng)


# ============================================================
# Robust accuracy
# ============================================================
def _count_correct(model: Model, x: np.ndarray, y: np.ndarray) -> int:
    with no_grad():
        logits = model(Tensor(x, dtype=model.dtype)).data
    return int((logits.argmax(axis=1) == y).sum())


def _batch_correct(model: Model, x: np.ndarray, y: np.ndarray, spec: AttackSpec, index: int) -> int:
    x_adv = attack(model, x, y, spec, np.random.default_rng([spec.seed, index]))
    return _count_correct(model, x_adv, y)


def clean_accuracy(model: Model, dataset, batch_size: int = 256, workers: int = 1) -> float:
    """Accuracy (percent) on unperturbed batches, counted like ``robust_accuracy``."""
    if len(dataset) == 0:
        raise DatasetError("cannot evaluate an empty dataset")
    batches = list(dataset.batches(batch_size, shuffle=False))
    with eval_mode(model):
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                correct = list(pool.map(lambda b: _count_correct(model, *b), batches))
        else:
            correct = [_count_correct(model, x, y) for x, y in batches]
    return 100.0 * sum(correct) / len(dataset)


def robust_accuracy(model: Model, dataset, spec: AttackSpec, batch_size: int = 256,
                    workers: int = 1) -> Dict[str, object]:
    """
    Accuracy (percent) on attacked batches. Batch i draws its random start
    from an RNG keyed by (spec.seed, i), so results do not depend on workers.
    """
    if len(dataset) == 0:
        raise DatasetError("cannot attack an empty dataset")
    batches = list(dataset.batches(batch_size, shuffle=False))
    jobs = [(x, y, spec, i) for i, (x, y) in enumerate(batches)]
    with eval_mode(model):
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                correct = list(pool.map(lambda job: _batch_correct(model, *job), jobs))
        else:
            correct = [_batch_correct(model, *job) for job in jobs]
    n = len(dataset)
    accuracy = 100.0 * sum(correct) / n
    logger.info("%s eps=%.4f: robust accuracy %.2f%% on %d samples", spec.label, spec.epsilon, accuracy, n)
    return {"attack": spec.label, "epsilon": spec.epsilon, "accuracy": accuracy, "n": n}
