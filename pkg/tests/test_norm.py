import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from rconvmk.engine.gradcheck import gradcheck
from rconvmk.engine.tensor import Tensor, backward
from rconvmk.errors import ArgumentError, ShapeError
from rconvmk.nn.functional import soft_threshold
from rconvmk.nn.module import Identity
from rconvmk.nn.norm import (
    BatchNorm2d,
    NSTState,
    SampleNorm,
    SoftThreshold,
    batch_norm,
    make_denoiser,
    nst_forward,
    sample_norm,
)


# ============================================================
# soft thresholding
# ============================================================
def test_soft_threshold_matches_piecewise_formula():
    x = np.linspace(-2.0, 2.0, 10 ** 6)
    tau = 0.3
    expected = np.select([x > tau, x < -tau], [x - tau, x + tau], 0.0)
    assert_array_equal(soft_threshold(Tensor(x), tau).data, expected)


def test_soft_threshold_gradient_is_zero_on_the_threshold():
    x = Tensor(np.array([-0.5, -0.25, 0.0, 0.25, 0.5]), requires_grad=True)
    backward(soft_threshold(x, 0.25).sum())
    assert_array_equal(x.grad.data, [1.0, 0.0, 0.0, 0.0, 1.0])


def test_soft_threshold_rejects_negative_tau():
    with pytest.raises(ArgumentError):
        soft_threshold(Tensor(np.ones(2)), -1e-3)
    with pytest.raises(ArgumentError):
        SoftThreshold(-1.0)


def test_soft_threshold_tau_zero_is_identity(rng):
    x = rng.standard_normal(100)
    assert_array_equal(soft_threshold(Tensor(x), 0.0).data, x)


def test_soft_threshold_is_odd_and_contractive(rng):
    x = rng.standard_normal(10000) * 0.5
    y = rng.standard_normal(10000) * 0.5
    tau = 0.1
    fx = soft_threshold(Tensor(x), tau).data
    fy = soft_threshold(Tensor(y), tau).data
    assert_array_equal(soft_threshold(Tensor(-x), tau).data, -fx)
    assert np.all(np.abs(fx - fy) <= np.abs(x - y) + 1e-12)
    assert np.all(np.abs(fx) <= np.abs(x))


# ============================================================
# sample norm
# ============================================================
def test_sample_norm_standardizes_each_sample(rng):
    x = rng.standard_normal((3, 4, 5, 5)) * 3 + 1
    y = sample_norm(Tensor(x)).data
    assert_allclose(y.mean(axis=(1, 2, 3)), 0.0, atol=1e-12)
    assert_allclose(y.var(axis=(1, 2, 3)), 1.0, rtol=1e-4)


def test_sample_norm_is_invariant_to_positive_affine_maps(rng):
    x = 10.0 * rng.standard_normal((4, 3, 5, 5))
    scale = rng.uniform(0.5, 2.0, size=(4, 1, 1, 1))
    shift = rng.uniform(-1.0, 1.0, size=(4, 1, 1, 1))
    base = sample_norm(Tensor(x)).data
    assert_allclose(sample_norm(Tensor(x * scale + shift)).data, base, rtol=1e-6, atol=1e-6)

    x32 = x.astype(np.float32)
    mapped = (x32 * scale.astype(np.float32) + shift.astype(np.float32)).astype(np.float32)
    assert_allclose(sample_norm(Tensor(mapped)).data, sample_norm(Tensor(x32)).data, rtol=1e-5, atol=1e-5)


def test_sample_norm_gradient(rng):
    assert gradcheck(sample_norm, Tensor(rng.standard_normal((2, 3, 4, 4)))).passed


def test_sample_norm_shape_error():
    with pytest.raises(ShapeError):
        sample_norm(Tensor(np.ones(3)))


# ============================================================
# batch norm
# ============================================================
def test_batch_norm_train_mode_statistics_and_running_update(rng):
    x = rng.standard_normal((4, 3, 5, 5)) * 2 + 0.5
    bn = BatchNorm2d(3, dtype=np.float64)
    y = batch_norm(Tensor(x), bn).data
    assert_allclose(y.mean(axis=(0, 2, 3)), 0.0, atol=1e-12)
    assert_allclose(y.var(axis=(0, 2, 3)), 1.0, rtol=1e-4)

    count = 4 * 5 * 5
    mean = x.mean(axis=(0, 2, 3))
    unbiased = x.var(axis=(0, 2, 3)) * count / (count - 1)
    assert_allclose(bn.running_mean, 0.1 * mean)
    assert_allclose(bn.running_var, 0.9 + 0.1 * unbiased)


def test_batch_norm_eval_mode_uses_running_statistics(rng):
    x = rng.standard_normal((2, 3, 4, 4))
    bn = BatchNorm2d(3, dtype=np.float64).eval()
    y = batch_norm(Tensor(x), bn).data
    assert_allclose(y, x / np.sqrt(1.0 + bn.eps))
    assert_array_equal(bn.running_mean, np.zeros(3))


def test_batch_norm_gradients(rng):
    bn = BatchNorm2d(3, dtype=np.float64)
    bn.weight.data[:] = [0.5, 1.5, -1.0]
    assert gradcheck(lambda t: batch_norm(t, bn), Tensor(rng.standard_normal((3, 3, 3, 3)))).passed
    bn.eval()
    assert gradcheck(lambda t: batch_norm(t, bn), Tensor(rng.standard_normal((3, 3, 3, 3)))).passed


def test_batch_norm_needs_two_values_per_channel():
    with pytest.raises(ShapeError):
        batch_norm(Tensor(np.ones((1, 3, 1, 1))), BatchNorm2d(3))
    with pytest.raises(ShapeError):
        batch_norm(Tensor(np.ones((2, 2, 3, 3))), BatchNorm2d(3))


# ============================================================
# NST
# ============================================================
@pytest.mark.parametrize("value", [0.0, 0.75, -3.0])
def test_nst_of_constant_batch_is_exactly_zero(value):
    x = Tensor(np.full((3, 4, 5, 5), value, dtype=np.float32))
    out = nst_forward(x, NSTState(4))
    assert_array_equal(out.data, np.zeros_like(out.data))
    assert out.dtype == np.float32


def test_nst_gradient(rng):
    state = NSTState(3, tau=1e-4, dtype=np.float64)
    assert gradcheck(lambda t: nst_forward(t, state), Tensor(rng.standard_normal((2, 3, 4, 4)))).passed


def eval_state(rng, channels=3):
    state = NSTState(channels, dtype=np.float64)
    state.running_mean[:] = rng.standard_normal(channels) * 0.2
    state.running_var[:] = rng.uniform(0.5, 2.0, channels)
    state.weight.data[:] = rng.uniform(0.5, 1.5, channels)
    return state.eval()


def test_nst_eval_mode_is_deterministic_and_batch_equivariant(rng):
    state = eval_state(rng)
    x = rng.standard_normal((5, 3, 4, 4))
    perm = rng.permutation(5)
    first = nst_forward(Tensor(x), state).data
    assert_array_equal(nst_forward(Tensor(x), state).data, first)
    assert_array_equal(nst_forward(Tensor(x[perm]), state).data, first[perm])


def test_nst_ignores_positive_scaling_of_one_sample(rng):
    state = eval_state(rng)
    x = rng.standard_normal((4, 3, 5, 5))
    scaled = x.copy()
    scaled[1] *= 4.0
    a = nst_forward(Tensor(x), state).data
    b = nst_forward(Tensor(scaled), state).data
    assert_allclose(b[1], a[1], rtol=1e-4, atol=1e-6)
    assert_array_equal(np.delete(b, 1, axis=0), np.delete(a, 1, axis=0))


def test_nst_zeroes_at_least_the_small_normalized_entries(rng):
    tau = 0.2
    state = NSTState(4, tau=tau, dtype=np.float64)
    x = rng.standard_normal((3, 4, 6, 6)) * 2 + 0.5
    x_bn = batch_norm(sample_norm(Tensor(x), state.eps), BatchNorm2d(4, dtype=np.float64)).data
    out = nst_forward(Tensor(x), state).data
    small = int((np.abs(x_bn) < tau).sum())
    assert small > 0
    assert int((out == 0).sum()) >= small


def test_nst_state_fields():
    state = NSTState(5)
    assert state.bn_gamma is state.weight
    assert state.bn_beta is state.bias
    assert state.tau == 1e-4
    assert state.num_parameters() == 10
    with pytest.raises(ArgumentError):
        NSTState(5, tau=-1.0)


def test_make_denoiser_kinds():
    assert isinstance(make_denoiser("nst", 4), NSTState)
    assert isinstance(make_denoiser("ln", 4), SampleNorm)
    assert isinstance(make_denoiser("st", 4), SoftThreshold)
    assert isinstance(make_denoiser("none", 4), Identity)
    with pytest.raises(ArgumentError):
        make_denoiser("bogus", 4)
