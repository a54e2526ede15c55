import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from rconvmk.engine.gradcheck import gradcheck
from rconvmk.engine.tensor import Tensor, backward
from rconvmk.errors import ArgumentError, ShapeError
from rconvmk.nn.functional import cross_entropy, global_avg_pool, linear_forward


def test_uniform_logits_give_log_k():
    loss = cross_entropy(Tensor(np.zeros((4, 10))), [0, 3, 9, 2])
    assert loss.item() == pytest.approx(math.log(10), rel=1e-12)


def test_cross_entropy_is_shift_stable():
    logits = np.array([[1000.0, 0.0], [0.0, 1000.0]])
    loss = cross_entropy(Tensor(logits), [0, 1]).item()
    assert math.isfinite(loss)
    assert loss == pytest.approx(0.0, abs=1e-12)


def test_cross_entropy_gradient(rng):
    labels = np.array([0, 2, 1])
    assert gradcheck(lambda t: cross_entropy(t, labels), Tensor(rng.standard_normal((3, 4)))).passed
    logits = Tensor(np.zeros((2, 2)), requires_grad=True)
    backward(cross_entropy(logits, [0, 1]))
    assert_allclose(logits.grad.data, [[-0.25, 0.25], [0.25, -0.25]])


def test_cross_entropy_errors():
    with pytest.raises(ArgumentError):
        cross_entropy(Tensor(np.zeros((2, 3))), [0, 3])
    with pytest.raises(ShapeError):
        cross_entropy(Tensor(np.zeros((2, 3))), [0])
    with pytest.raises(ShapeError):
        cross_entropy(Tensor(np.zeros(3)), [0])


def test_random_logits_top1_error_near_chance(rng):
    logits = rng.standard_normal((1000, 10))
    labels = rng.integers(0, 10, size=1000)
    error = 100.0 * (logits.argmax(axis=1) != labels).mean()
    assert error == pytest.approx(90.0, abs=5.0)


def test_global_avg_pool_and_linear(rng):
    x = rng.standard_normal((2, 3, 4, 4))
    assert_allclose(global_avg_pool(Tensor(x)).data, x.mean(axis=(2, 3)))
    w, b = rng.standard_normal((5, 3)), rng.standard_normal(5)
    out = linear_forward(Tensor(x.mean(axis=(2, 3))), Tensor(w), Tensor(b))
    assert_allclose(out.data, x.mean(axis=(2, 3)) @ w.T + b)
