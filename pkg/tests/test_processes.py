import numpy as np
import pytest

from selfdb.errors import InvalidArgument
from selfdb.operators import MaskTriple, Measurement, adjoint_A, apply_mask, forward_A, make_nested_triple, simulate_measurement
from selfdb.processes import (
    DiffusionSample,
    ambient_db_forward,
    ambient_ddm_forward,
    db_forward,
    ddm_forward,
    selfdb_forward,
)
from selfdb.schedules import DdmSchedule, constant_sigma, linear_beta_schedule
from selfdb.tensors import NoiseDraw, gaussian, l2_norm


def _sched_with_alpha_bar(ab):
    return DdmSchedule([ab])


def test_ddm_forward_endpoints():
    x = np.array([[1.0 + 0j]])
    eps = np.array([[1.0 + 0j]])
    assert ddm_forward(x, 1, _sched_with_alpha_bar(1.0), eps).state == x
    # alpha_bar = 0.25: 0.5 * 1 + sqrt(0.75) * 1
    got = ddm_forward(x, 1, _sched_with_alpha_bar(0.25), eps).state[0, 0]
    assert got == pytest.approx(1.3660254037844386, abs=1e-15)


def test_ddm_forward_pure_noise_limit():
    x = np.ones((2, 2), complex)
    eps = gaussian((2, 2), NoiseDraw(0))
    s = DdmSchedule([1e-300])
    np.testing.assert_allclose(ddm_forward(x, 1, s, eps).state, eps, atol=1e-100 + 1e-149)


def test_ddm_forward_rejects_bad_step():
    s = linear_beta_schedule(10, 0.1, 0.2)
    with pytest.raises(InvalidArgument):
        ddm_forward(np.zeros((2, 2)), 0, s, np.zeros((2, 2)))
    with pytest.raises(InvalidArgument):
        ddm_forward(np.zeros((2, 2)), 11, s, np.zeros((2, 2)))


def test_noise_draw_replay(phantom64):
    s = linear_beta_schedule(10, 0.1, 0.2)
    a = ddm_forward(phantom64, 4, s, NoiseDraw(3, 2))
    b = ddm_forward(phantom64, 4, s, NoiseDraw(3, 2))
    assert np.array_equal(a.state, b.state)
    assert a.noise_used == NoiseDraw(3, 2)
    assert a.tau == pytest.approx(0.4)


def test_ambient_ddm_forward(noiseless_y, triple64, phantom64):
    s = linear_beta_schedule(10, 0.05, 0.5)
    eps = gaussian((64, 64), NoiseDraw(1))
    out = ambient_ddm_forward(noiseless_y, triple64.m_prime, 1, DdmSchedule([1.0]), eps).state
    np.testing.assert_array_equal(out.data, apply_mask(triple64.m_prime, noiseless_y).data)
    for t in range(1, 11):
        out = ambient_ddm_forward(noiseless_y, triple64.m_prime, t, s, eps, m=triple64.m).state
        assert out.consistent_with(triple64.m_prime)
        ref = apply_mask(triple64.m_prime, forward_A(ddm_forward(phantom64, t, s, eps).state)).data
        assert l2_norm(out.data - ref) / l2_norm(ref) < 1e-8


def test_ambient_rejects_unnested(noiseless_y, triple64):
    other = make_nested_triple(64, (1 / 4, 1 / 6, 1 / 8), 1 / 16, NoiseDraw(77))
    s = linear_beta_schedule(10, 0.05, 0.5)
    eps = np.zeros((64, 64), complex)
    with pytest.raises(InvalidArgument):
        ambient_ddm_forward(noiseless_y, other.m_prime, 3, s, eps, m=triple64.m)
    with pytest.raises(InvalidArgument):
        ambient_db_forward(noiseless_y, other.m_prime, 0.3, constant_sigma(0.01), eps, m=triple64.m)


def test_db_forward_endpoints(phantom64, triple64):
    y = simulate_measurement(phantom64, None, triple64.m_prime, 0.0, None)
    s0 = constant_sigma(0.0)
    eps = gaussian((64, 64), NoiseDraw(2))
    zf = adjoint_A(y)
    np.testing.assert_array_equal(db_forward(phantom64, y, 0.0, s0, eps).state, phantom64)
    np.testing.assert_allclose(db_forward(phantom64, y, 1.0, s0, eps).state, zf, atol=1e-15)
    np.testing.assert_allclose(db_forward(phantom64, y, 0.5, s0, eps).state, (phantom64 + zf) / 2, atol=1e-15)
    with pytest.raises(InvalidArgument):
        db_forward(phantom64, y, 1.5, s0, eps)


def test_ambient_db_collapse(noiseless_y, triple64, phantom64):
    eps = gaussian((64, 64), NoiseDraw(3))
    sched = constant_sigma(0.05)
    for t in np.linspace(0, 1, 10):
        out = ambient_db_forward(noiseless_y, triple64.m_prime, t, sched, eps, m=triple64.m).state
        assert out.consistent_with(triple64.m_prime)
        ref = apply_mask(triple64.m_prime, forward_A(db_forward(phantom64, noiseless_y, t, sched, eps).state)).data
        assert l2_norm(out.data - ref) / l2_norm(ref) < 1e-8


def test_ambient_db_time_independent_without_noise(noiseless_y, triple64):
    eps = gaussian((64, 64), NoiseDraw(3))
    s0 = constant_sigma(0.0)
    states = [ambient_db_forward(noiseless_y, triple64.m_prime, t, s0, eps).state.data for t in (0.0, 0.3, 1.0)]
    for s in states[1:]:
        assert np.array_equal(s, states[0])
    np.testing.assert_array_equal(states[0], apply_mask(triple64.m_prime, noiseless_y).data)


def test_selfdb_forward_endpoints(noiseless_y, triple64):
    s0 = constant_sigma(0.0)
    eps = gaussian(noiseless_y.shape, NoiseDraw(4))
    np.testing.assert_array_equal(selfdb_forward(noiseless_y, triple64, 0.0, s0, eps).state.data, apply_mask(triple64.m_bar, noiseless_y).data)
    np.testing.assert_array_equal(selfdb_forward(noiseless_y, triple64, 1.0, s0, eps).state.data, apply_mask(triple64.m_prime, noiseless_y).data)


def test_selfdb_forward_midpoint_columnwise(noiseless_y, triple64):
    mid = selfdb_forward(noiseless_y, triple64, 0.5, constant_sigma(0.0), np.zeros(noiseless_y.shape)).state.data
    y = noiseless_y.data
    only_bar = sorted(set(triple64.m_bar.selected) - set(triple64.m_prime.selected))
    prime = list(triple64.m_prime.selected)
    outside = sorted(set(range(64)) - set(triple64.m_bar.selected))
    np.testing.assert_allclose(mid[..., only_bar], 0.5 * y[..., only_bar], rtol=0, atol=1e-15)
    np.testing.assert_array_equal(mid[..., prime], y[..., prime])
    assert np.all(mid[..., outside] == 0)


def test_selfdb_noise_spans_full_grid(noiseless_y, triple64):
    eps = gaussian(noiseless_y.shape, NoiseDraw(4))
    out = selfdb_forward(noiseless_y, triple64, 0.5, constant_sigma(0.1), eps).state.data
    outside = sorted(set(range(64)) - set(triple64.m_bar.selected))
    np.testing.assert_allclose(out[..., outside], 0.1 * eps[..., outside])


def test_selfdb_distinguishes_endpoints_where_ambient_db_cannot(noiseless_y, triple64):
    s0 = constant_sigma(0.0)
    eps_m = np.zeros(noiseless_y.shape)
    eps_i = np.zeros((64, 64))
    d_self = l2_norm(selfdb_forward(noiseless_y, triple64, 0.0, s0, eps_m).state.data - selfdb_forward(noiseless_y, triple64, 1.0, s0, eps_m).state.data)
    d_amb = l2_norm(ambient_db_forward(noiseless_y, triple64.m_prime, 0.0, s0, eps_i).state.data - ambient_db_forward(noiseless_y, triple64.m_prime, 1.0, s0, eps_i).state.data)
    assert d_self > 1e-3
    assert d_amb == 0


def test_selfdb_mask_mismatch(noiseless_y, triple64):
    other = make_nested_triple(64, (1 / 4, 1 / 6, 1 / 8), 1 / 16, NoiseDraw(77))
    with pytest.raises(InvalidArgument):
        selfdb_forward(noiseless_y, other, 0.5, constant_sigma(0.0), NoiseDraw(0))


def test_sample_domain_validation():
    with pytest.raises(InvalidArgument):
        DiffusionSample(np.zeros((2, 2)), 0.5, "selfdb", 0.5)
    with pytest.raises(InvalidArgument):
        DiffusionSample(Measurement(np.zeros((2, 2))), 0.5, "db", 0.5)
    with pytest.raises(InvalidArgument):
        DiffusionSample(np.zeros((2, 2)), 0.5, "ddm", 1.5)
