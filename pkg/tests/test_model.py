import numpy as np
import pytest

from selfdb.errors import InvalidArgument
from selfdb.model import Arch, ModelParams, backward, forward, grad_check, init_params, time_embedding
from selfdb.operators import Measurement, adjoint_A
from selfdb.processes import DiffusionSample
from selfdb.tensors import NoiseDraw, gaussian, l2_norm

MICRO = Arch(16, 16, hidden=(4, 4), embed_dims=2)


def _sample(t=0.3, size=16, seed=0):
    return DiffusionSample(gaussian((size, size), NoiseDraw(seed)), t, "db", t)


def test_param_count():
    # (2+8 -> 32), (32 -> 32) x2, (32 -> 2), 3x3 kernels
    a = Arch(64, 64)
    assert a.param_count == (10 * 32 * 9 + 32) + 2 * (32 * 32 * 9 + 32) + (32 * 2 * 9 + 2)
    assert MICRO.param_count < 500
    assert init_params(a, NoiseDraw(0)).theta.size == a.param_count


@pytest.mark.parametrize("kw", [dict(height=0, width=4), dict(height=4, width=4, kernel=2), dict(height=4, width=4, hidden=(0,)), dict(height=4, width=4, embed_dims=3)])
def test_bad_arch(kw):
    with pytest.raises(InvalidArgument):
        Arch(**kw)


def test_init_deterministic_and_zero_bias():
    a = init_params(MICRO, NoiseDraw(3))
    b = init_params(MICRO, NoiseDraw(3))
    assert np.array_equal(a.theta, b.theta)
    for _, bias in a.layers():
        assert np.all(bias == 0)


def test_init_fan_in_scaling():
    arch = Arch(8, 8, hidden=(64, 64))
    p = init_params(arch, NoiseDraw(1))
    for (W, _), (co, ci) in zip(p.layers(), arch.layer_shapes()):
        if W.size >= 1000:
            expected = np.sqrt(2 / (ci * 9))
            assert abs(W.std() / expected - 1) < 0.1


def test_output_gain_zero_starts_at_identity():
    arch = Arch(16, 16, hidden=(4,), output_gain=0.0)
    p = init_params(arch, NoiseDraw(0))
    s = _sample()
    np.testing.assert_array_equal(forward(p, s), s.state)


def test_theta_validation():
    with pytest.raises(InvalidArgument):
        ModelParams(MICRO, np.zeros(3))
    bad = np.zeros(MICRO.param_count)
    bad[0] = np.nan
    with pytest.raises(InvalidArgument):
        ModelParams(MICRO, bad)


def test_time_embedding_range():
    e = time_embedding(np.linspace(0, 1, 50), 8)
    assert e.shape == (50, 8)
    assert np.all(np.abs(e) <= 1)


def test_forward_pure_and_shaped():
    p = init_params(MICRO, NoiseDraw(0))
    s = _sample()
    out = forward(p, s)
    assert out.shape == (16, 16) and out.dtype == np.complex128
    assert np.array_equal(out, forward(p, s))


def test_time_conditioning_is_live():
    p = init_params(MICRO, NoiseDraw(0))
    x = gaussian((16, 16), NoiseDraw(1))
    a = forward(p, DiffusionSample(x, 0.1, "db", 0.1))
    b = forward(p, DiffusionSample(x, 0.9, "db", 0.9))
    assert l2_norm(a - b) > 0


def test_measurement_input_is_zero_filled():
    p = init_params(MICRO, NoiseDraw(0))
    y = Measurement(gaussian((1, 16, 16), NoiseDraw(2)))
    a = forward(p, DiffusionSample(y, 0.5, "selfdb", 0.5))
    b = forward(p, DiffusionSample(adjoint_A(y), 0.5, "db", 0.5))
    np.testing.assert_array_equal(a, b)


def test_dim_mismatch():
    p = init_params(MICRO, NoiseDraw(0))
    with pytest.raises(InvalidArgument):
        forward(p, _sample(size=8))


def test_conditioning_required():
    arch = Arch(16, 16, hidden=(4,), cond_channels=2)
    p = init_params(arch, NoiseDraw(0))
    with pytest.raises(InvalidArgument):
        forward(p, _sample())
    cond = gaussian((16, 16), NoiseDraw(9))
    a = forward(p, _sample(), condition=cond)
    b = forward(p, _sample(), condition=2 * cond)
    assert l2_norm(a - b) > 0


def test_backward_zero_and_linearity():
    p = init_params(MICRO, NoiseDraw(0))
    s = _sample()
    assert np.all(backward(p, s, np.zeros((16, 16), complex)) == 0)
    g = gaussian((16, 16), NoiseDraw(4))
    np.testing.assert_allclose(backward(p, s, 3.0 * g), 3.0 * backward(p, s, g), rtol=1e-12, atol=1e-12)


def test_backward_matches_finite_differences_per_coordinate():
    # central differences, h = 1e-5, 50 random coordinates of a ~370-parameter net
    p = init_params(MICRO, NoiseDraw(0))
    rep = grad_check(p, _sample(), tolerance=1e-5, n_coords=50, h=1e-5)
    assert rep.n_checked == 50
    assert rep.passed, rep


def test_grad_check_linear_net_exact():
    arch = Arch(16, 16, hidden=(), embed_dims=2)
    p = init_params(arch, NoiseDraw(0))
    assert grad_check(p, _sample(), tolerance=1e-7).max_rel_err < 1e-7


def test_grad_check_default_micro_net():
    arch = Arch(16, 16, hidden=(8, 8), embed_dims=4)
    assert grad_check(init_params(arch, NoiseDraw(2)), _sample(), tolerance=1e-4).passed


def test_grad_check_zero_tolerance_fails():
    p = init_params(MICRO, NoiseDraw(0))
    assert not grad_check(p, _sample(), tolerance=0.0).passed


def test_backward_with_condition():
    arch = Arch(12, 12, hidden=(4,), embed_dims=2, cond_channels=2)
    p = init_params(arch, NoiseDraw(0))
    cond = gaussian((12, 12), NoiseDraw(1))
    rep = grad_check(p, _sample(size=12), tolerance=1e-5, condition=cond)
    assert rep.passed
