"""
Finite-difference gradient checking.

Compares tape gradients against central differences (f(x+h) - f(x-h)) / 2h
in float64. Non-scalar outputs are contracted with a fixed seeded weighting
so the whole Jacobian participates.

Relative error per element is |a - n| / max(|a|, |n|, floor). An element that
fails and whose one-sided differences disagree (f is not smooth inside
[x-h, x+h], e.g. |x| = tau for soft thresholding or a relu kink downstream)
is reported as an excluded kink point instead of a failure.
"""

from dataclasses import dataclass, field
from typing import Callable, List, Tuple

import numpy as np

from rconvmk.engine.tensor import Tensor, backward
from rconvmk.errors import GradcheckError

DEFAULT_STEP = 1e-5
DEFAULT_TOL = 1e-4
DEFAULT_FLOOR = 1e-3


@dataclass
class GradcheckReport:
    max_rel_err: float
    passed: bool
    tol: float
    checked: int
    excluded: List[Tuple[int, ...]] = field(default_factory=list)
    worst_index: Tuple[int, ...] = ()

    def as_row(self) -> dict:
        return {
            "max_rel_err": self.max_rel_err,
            "passed": self.passed,
            "checked": self.checked,
            "excluded": len(self.excluded),
        }


def _contract(out: Tensor, weights: np.ndarray) -> Tensor:
    if out.size == 1:
        return out.sum()
    return (out * Tensor(weights, dtype=out.dtype)).sum()


def gradcheck(
    f: Callable[[Tensor], Tensor],
    x: Tensor,
    h: float = DEFAULT_STEP,
    tol: float = DEFAULT_TOL,
    floor: float = DEFAULT_FLOOR,
    seed: int = 0,
) -> GradcheckReport:
    """
    Check the tape gradient of ``f`` at ``x`` against central differences.

    Args:
        f: tensor function; must be deterministic.
        x: float64 input point.
        h: finite-difference step.
        tol: pass threshold on the max relative error.
        floor: denominator floor for the relative error.
        seed: seed of the output weighting for non-scalar ``f``.

    Raises:
        GradcheckError: x is not float64, or two forward evaluations at the
            same point disagree (non-deterministic f).
    """
    if x.dtype != np.float64:
        raise GradcheckError(f"gradcheck needs float64 input, got {x.dtype}")

    base = x.data.copy()
    sample = f(Tensor(base, dtype=np.float64))
    weights = np.random.default_rng(seed).uniform(-1.0, 1.0, size=sample.shape)

    def scalar_at(values: np.ndarray) -> float:
        return _contract(f(Tensor(values, dtype=np.float64)), weights).item()

    f0 = scalar_at(base)
    if scalar_at(base) != f0:
        raise GradcheckError("f is non-deterministic: two evaluations at the same point differ")

    leaf = Tensor(base.copy(), dtype=np.float64, requires_grad=True)
    backward(_contract(f(leaf), weights))
    analytic = np.zeros_like(base) if leaf.grad is None else leaf.grad.data

    worst, worst_index = 0.0, ()
    excluded: List[Tuple[int, ...]] = []
    for index in np.ndindex(base.shape):
        shifted = base.copy()
        shifted[index] = base[index] + h
        f_plus = scalar_at(shifted)
        shifted[index] = base[index] - h
        f_minus = scalar_at(shifted)

        numeric = (f_plus - f_minus) / (2 * h)
        a = analytic[index]
        err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
        if err <= tol:
            if err > worst:
                worst, worst_index = err, index
            continue

        forward_diff = (f_plus - f0) / h
        backward_diff = (f0 - f_minus) / h
        spread = abs(forward_diff - backward_diff)
        if spread > max(1e-2 * max(abs(forward_diff), abs(backward_diff)), 10 * tol):
            excluded.append(index)
            continue
        if err > worst:
            worst, worst_index = err, index

    return GradcheckReport(
        max_rel_err=float(worst),
        passed=worst <= tol,
        tol=tol,
        checked=int(base.size) - len(excluded),
        excluded=excluded,
        worst_index=worst_index,
    )
