import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from skimage.metrics import structural_similarity

from selfdb.dataio import PhantomSpec, gen_phantom
from selfdb.errors import InvalidArgument
from selfdb.metrics import MetricReport, evaluate, nrmse, ssim, write_metrics_csv
from selfdb.tensors import NoiseDraw, gaussian


@pytest.fixture(scope="module")
def x():
    return gen_phantom(PhantomSpec(size=64, seed=0), 0)


def test_nrmse_examples(x):
    assert nrmse(x, x) == 0
    assert nrmse(2 * x, x) == pytest.approx(1.0, abs=1e-15)
    assert nrmse(np.zeros_like(x), x) == pytest.approx(1.0, abs=1e-15)


def test_nrmse_ignores_phase(x):
    assert nrmse(x * np.exp(1j * 0.7), x) < 1e-15


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 5), st.integers(0, 1000))
def test_nrmse_scale_covariance(c, seed):
    a = gaussian((8, 8), NoiseDraw(seed))
    ref = gaussian((8, 8), NoiseDraw(seed + 1))
    direct = np.linalg.norm(c * np.abs(a) - np.abs(ref)) / np.linalg.norm(np.abs(ref))
    assert nrmse(c * a, ref) == pytest.approx(direct, rel=1e-12, abs=1e-15)


def test_nrmse_errors(x):
    with pytest.raises(InvalidArgument):
        nrmse(x, np.zeros_like(x))
    with pytest.raises(InvalidArgument):
        nrmse(x[:10], x)


def test_ssim_identity(x):
    assert ssim(x, x) == pytest.approx(1.0, abs=1e-12)


def test_ssim_matches_skimage(x):
    est = x + 0.1 * gaussian(x.shape, NoiseDraw(1))
    ours = ssim(est, x)
    ref = structural_similarity(
        np.abs(x), np.abs(est), data_range=np.abs(x).max(), gaussian_weights=True, sigma=1.5, use_sample_covariance=False
    )
    assert ours == pytest.approx(ref, abs=1e-10)


def test_ssim_noise_anchor(x):
    noisy = x + np.random.default_rng(0).normal(size=x.shape) * np.abs(x).max()
    val = ssim(noisy, x)
    assert val < 0.5
    assert val == pytest.approx(0.04815030242175993, abs=1e-12)


def test_ssim_symmetric_with_pinned_range(x):
    y = x + 0.2 * gaussian(x.shape, NoiseDraw(2))
    assert ssim(x, y, data_range=1.0) == pytest.approx(ssim(y, x, data_range=1.0), abs=1e-12)


def test_ssim_too_small():
    with pytest.raises(InvalidArgument):
        ssim(np.ones((8, 8)), np.ones((8, 8)))


def test_report_and_csv(tmp_path, x):
    recons = [x, 0.5 * x]
    rep = evaluate(recons, [x, x])
    assert rep.nrmse == pytest.approx(np.mean([r[0] for r in rep.per_image]), abs=1e-12)
    assert rep.ssim == pytest.approx(np.mean([r[1] for r in rep.per_image]), abs=1e-12)
    write_metrics_csv(rep, tmp_path / "m.csv")
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "image_index,nrmse,ssim"
    assert lines[-1].startswith("mean,")
    assert len(lines) == 4


def test_perfect_recon_report(x):
    rep = evaluate([x, x], [x, x])
    assert rep.nrmse == 0 and rep.ssim == pytest.approx(1.0, abs=1e-12)
