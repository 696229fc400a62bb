import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from selfdb.errors import InvalidArgument
from selfdb.operators import (
    MaskTriple,
    Measurement,
    SamplingMask,
    adjoint_A,
    apply_mask,
    forward_A,
    fourier,
    inverse_fourier,
    low_frequency_columns,
    make_mask,
    make_nested_triple,
    round_half_up,
    simulate_measurement,
    synthetic_maps,
)
from selfdb.tensors import NoiseDraw, gaussian, l2_norm


def test_round_half_up():
    assert round_half_up(2.5) == 3
    assert round_half_up(64 / 6) == 11
    assert round_half_up(0.166 * 64) == 11


def test_mask_counts():
    assert len(make_mask(64, 0.25, 0.0625, NoiseDraw(0)).selected) == 16
    assert make_mask(64, 1.0, 0.0, NoiseDraw(0)).selected == tuple(range(64))


def test_low_frequency_band_layout():
    # unshifted FFT layout: frequencies -2, -1, 0, 1
    assert low_frequency_columns(64, 4).tolist() == [0, 1, 62, 63]


def test_mask_center_included():
    m = make_mask(64, 0.125, 0.0625, NoiseDraw(11))
    assert len(m.selected) == 8
    assert {0, 1, 62, 63} <= set(m.selected)
    assert m == make_mask(64, 0.125, 0.0625, NoiseDraw(11))


@pytest.mark.parametrize("rate", [0.0, -0.1, 1.5])
def test_mask_bad_rate(rate):
    with pytest.raises(InvalidArgument):
        make_mask(64, rate, 0.0, NoiseDraw(0))


def test_mask_center_fraction_above_rate():
    with pytest.raises(InvalidArgument):
        make_mask(64, 0.1, 0.2, NoiseDraw(0))


def test_default_rates_triple_sizes(triple64):
    assert [len(m.selected) for m in triple64] == [16, 11, 8]
    assert triple64.m_prime.issubset(triple64.m_bar)
    assert triple64.m_bar.issubset(triple64.m)


def test_full_outer_mask():
    t = make_nested_triple(64, (1.0, 0.5, 0.25), 0.0, NoiseDraw(2))
    assert t.m.selected == tuple(range(64))


@pytest.mark.parametrize("rates", [(0.25, 0.25, 0.125), (0.125, 0.166, 0.25), (1.2, 0.5, 0.25)])
def test_triple_rejects_non_monotone(rates):
    with pytest.raises(InvalidArgument):
        make_nested_triple(64, rates, 0.0, NoiseDraw(0))


def test_triple_rejects_broken_nesting():
    a = SamplingMask(8, (0, 1, 2, 3), 0.5)
    b = SamplingMask(8, (4, 5), 0.25)
    with pytest.raises(InvalidArgument):
        MaskTriple(a, b, b)


@given(st.integers(0, 10_000), st.sampled_from([32, 48, 64, 96]))
@settings(max_examples=40, deadline=None)
def test_nesting_and_projection_algebra(seed, width):
    t = make_nested_triple(width, (1 / 4, 1 / 6, 1 / 8), 1 / 32, NoiseDraw(seed))
    assert set(t.m_prime.selected) <= set(t.m_bar.selected) <= set(t.m.selected)
    y = gaussian((2, 8, width), NoiseDraw(seed, 1))
    once = apply_mask(t.m_prime, y).data
    assert np.array_equal(apply_mask(t.m_prime, apply_mask(t.m, y)).data, once)
    assert np.array_equal(apply_mask(t.m_prime, apply_mask(t.m_bar, y)).data, once)


def test_apply_mask_identity_and_idempotence():
    y = gaussian((1, 8, 16), NoiseDraw(1))
    full = SamplingMask(16, tuple(range(16)), 1.0)
    assert np.array_equal(apply_mask(full, y).data, y)
    m = make_mask(16, 0.25, 0.0, NoiseDraw(1))
    assert np.array_equal(apply_mask(m, apply_mask(m, y)).data, apply_mask(m, y).data)
    with pytest.raises(InvalidArgument):
        apply_mask(m, y[..., :8])


def test_fourier_constant_image():
    c, n = 0.7 - 0.2j, 8
    k = fourier(np.full((n, n), c))
    assert k[0, 0] == pytest.approx(c * n, abs=1e-12)  # c * sqrt(N), N = n^2
    k[0, 0] = 0
    assert np.max(np.abs(k)) < 1e-12


def test_fourier_two_point():
    # X_k = (x_0 + (-1)^k x_1) / sqrt(2)
    np.testing.assert_allclose(fourier(np.array([[1.0, -1.0]])), [[0.0, np.sqrt(2)]], atol=1e-15)


def test_fourier_unitary():
    x = gaussian((32, 24), NoiseDraw(4))
    assert abs(l2_norm(fourier(x)) - l2_norm(x)) / l2_norm(x) < 1e-10
    np.testing.assert_allclose(inverse_fourier(fourier(x)), x, atol=1e-12)


def test_forward_single_unit_coil_is_fourier():
    x = gaussian((16, 16), NoiseDraw(5))
    np.testing.assert_array_equal(forward_A(x)[0], fourier(x))
    assert np.all(forward_A(np.zeros((16, 16), complex)) == 0)


@pytest.mark.parametrize("coils", [1, 3, 8])
def test_maps_unit_normalized(coils):
    s = synthetic_maps(coils, 20, 24)
    np.testing.assert_allclose(np.sum(np.abs(s.maps) ** 2, axis=0), 1.0, atol=1e-10)


@pytest.mark.parametrize("coils", [1, 4])
def test_forward_preserves_norm_and_gram_identity(coils):
    s = synthetic_maps(coils, 24, 24)
    x = gaussian((24, 24), NoiseDraw(6))
    assert abs(l2_norm(forward_A(x, s)) - l2_norm(x)) / l2_norm(x) < 1e-10
    np.testing.assert_allclose(adjoint_A(forward_A(x, s), s), x, rtol=0, atol=1e-8 * np.abs(x).max())


def test_adjoint_dot_product():
    s = synthetic_maps(4, 16, 16)
    worst = 0.0
    for i in range(100):
        x = gaussian((16, 16), NoiseDraw(i, 0))
        y = gaussian((4, 16, 16), NoiseDraw(i, 1))
        err = abs(np.vdot(y, forward_A(x, s)) - np.vdot(adjoint_A(y, s), x))
        worst = max(worst, err / (l2_norm(x) * l2_norm(y)))
    assert worst < 1e-10
    assert np.all(adjoint_A(np.zeros((4, 16, 16), complex), s) == 0)


def test_shape_mismatch_rejected():
    s = synthetic_maps(2, 16, 16)
    with pytest.raises(InvalidArgument):
        forward_A(np.zeros((8, 8), complex), s)
    with pytest.raises(InvalidArgument):
        adjoint_A(np.zeros((3, 16, 16), complex), s)


def test_single_coil_AAH_is_identity_on_mask_support(triple64):
    for mask in triple64:
        y = apply_mask(mask, gaussian((1, 64, 64), NoiseDraw(8))).data
        back = apply_mask(mask, forward_A(adjoint_A(y))).data
        np.testing.assert_allclose(back, y, atol=1e-8 * np.abs(y).max())


def test_simulate_noiseless(phantom64, triple64):
    full = SamplingMask(64, tuple(range(64)), 1.0)
    y = simulate_measurement(phantom64, None, full, 0.0, None)
    np.testing.assert_array_equal(y.data[0], fourier(phantom64))
    y = simulate_measurement(phantom64, None, triple64.m, 0.0, None)
    assert y.consistent_with(triple64.m)
    assert y.mask_id == triple64.m.ident


def test_simulate_noise_energy(phantom64, triple64):
    # Monte Carlo over 100 draws: E||e||^2 = std^2 * (selected columns * height)
    std = 0.05
    clean = simulate_measurement(phantom64, None, triple64.m, 0.0, None).data
    energies = [
        np.sum(np.abs(simulate_measurement(phantom64, None, triple64.m, std, NoiseDraw(9, k)).data - clean) ** 2)
        for k in range(100)
    ]
    expected = std**2 * len(triple64.m.selected) * 64
    assert abs(np.mean(energies) - expected) / expected < 0.05
    with pytest.raises(InvalidArgument):
        simulate_measurement(phantom64, None, triple64.m, -1.0, None)


def test_measurement_shapes():
    m = Measurement(np.zeros((4, 4)))
    assert m.shape == (1, 4, 4)
    with pytest.raises(InvalidArgument):
        Measurement(np.zeros(4))
