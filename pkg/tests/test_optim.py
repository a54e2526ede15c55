import numpy as np
import pytest
from numpy.testing import assert_allclose

from rconvmk.engine.tensor import Parameter, Tensor, backward
from rconvmk.errors import ArgumentError, ShapeError
from rconvmk.nn.linear import Linear
from rconvmk.nn.optim import SGD, MultiStepLR, sgd_step


def test_sgd_step_with_momentum():
    p = Parameter(np.array([1.0, 2.0]))
    g = np.array([0.5, 0.5])
    v = sgd_step([p], [g], lr=0.1, momentum=0.9)
    assert_allclose(p.data, [0.95, 1.95])
    sgd_step([p], [g], lr=0.1, momentum=0.9, velocities=v)
    assert_allclose(v[0], [0.95, 0.95])
    assert_allclose(p.data, [0.855, 1.855])


def test_sgd_step_weight_decay():
    p = Parameter(np.array([2.0]))
    sgd_step([p], [np.array([0.0])], lr=0.5, weight_decay=0.1)
    assert_allclose(p.data, [2.0 - 0.5 * 0.2])


def test_sgd_step_skips_missing_grads():
    p, q = Parameter(np.array([1.0])), Parameter(np.array([1.0]))
    v = sgd_step([p, q], [None, np.array([1.0])], lr=1.0)
    assert p.data[0] == 1.0
    assert q.data[0] == 0.0
    assert v[0] is None


def test_sgd_step_shape_errors():
    p = Parameter(np.ones(2))
    with pytest.raises(ShapeError):
        sgd_step([p], [np.ones(3)], lr=0.1)
    with pytest.raises(ShapeError):
        sgd_step([p], [], lr=0.1)


def test_sgd_optimizer_reduces_quadratic():
    p = Parameter(np.array([3.0, -2.0]))
    opt = SGD([p], lr=0.1, momentum=0.5)
    for _ in range(50):
        opt.zero_grad()
        backward((p * p).sum())
        opt.step()
    assert np.abs(p.data).max() < 1e-3
    assert opt.step_count == 50


def test_sgd_state_dict_round_trip():
    layer = Linear(3, 2, rng=np.random.default_rng(0), dtype=np.float64)
    opt = SGD(layer.parameters(), lr=0.1)
    backward(layer(Tensor(np.ones((4, 3)))).sum())
    opt.step()
    state = opt.state_dict()

    other = SGD(layer.parameters(), lr=0.5)
    other.load_state_dict(state)
    assert other.lr == 0.1
    assert other.step_count == 1
    for a, b in zip(other.velocities, opt.velocities):
        assert_allclose(a, b)

    with pytest.raises(ShapeError):
        other.load_state_dict({**state, "velocities": state["velocities"][:1]})


def test_sgd_rejects_negative_lr():
    with pytest.raises(ArgumentError):
        SGD([], lr=-0.1)


def test_multistep_schedule():
    opt = SGD([Parameter(np.ones(1))], lr=0.1)
    schedule = MultiStepLR(opt, milestones=[4, 2], gamma=0.1)
    lrs = [schedule.lr_at(e) for e in range(6)]
    assert_allclose(lrs, [0.1, 0.1, 0.01, 0.01, 0.001, 0.001])
    assert schedule.set_epoch(3) == pytest.approx(0.01)
    assert opt.lr == pytest.approx(0.01)
