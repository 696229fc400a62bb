"""Desk-scale comparison of SelfDB against Ambient-DB and C-Ambient-DDM.

Everything is trained from simulated measurements sampled with the outer
mask ``M``; clean phantoms are only used to simulate data and to score.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .dataio import PhantomSpec, gen_dataset
from .metrics import evaluate
from .operators import apply_mask, make_nested_triple, simulate_measurement, synthetic_maps
from .samplers import sample_ambient_db, sample_ddm, sample_selfdb
from .tensors import NoiseDraw
from .training import TrainConfig, TrainingSet, train

log = logging.getLogger(__name__)

__all__ = ["DeskConfig", "DeskResult", "prepare", "infer", "run_desk_experiment"]


@dataclass
class DeskConfig:
    size: int = 64
    n_train: int = 64
    n_test: int = 16
    rates: tuple[float, float, float] = (1 / 4, 1 / 6, 1 / 8)
    center_fraction: float = 1 / 16
    noise_std: float = 0.0
    coils: int = 1
    seed: int = 0
    steps: int = 4
    iterations: int = 600
    batch_size: int = 8
    learning_rate: float = 1e-3
    hidden: tuple[int, ...] = (32, 32, 32)
    sigma0: float = 0.01
    output_gain: float = 0.0
    T: int = 100
    methods: tuple[str, ...] = ("selfdb", "ambient_db", "c_ambient_ddm")


@dataclass
class DeskResult:
    nrmse: dict = field(default_factory=dict)
    ssim: dict = field(default_factory=dict)
    seconds: dict = field(default_factory=dict)
    zero_filled_nrmse: float = float("nan")


METHOD_KIND = {"selfdb": "selfdb", "ambient_db": "ambient_db", "c_ambient_ddm": "ambient_ddm"}


def prepare(cfg: DeskConfig):
    """Masks, maps, training set (measured with M) and test set (measured with M')."""
    spec = PhantomSpec(size=cfg.size, seed=cfg.seed)
    train_x = gen_dataset(spec, cfg.n_train).images
    test_x = gen_dataset(spec, cfg.n_test, start=100_000).images
    triple = make_nested_triple(cfg.size, cfg.rates, cfg.center_fraction, NoiseDraw(cfg.seed, 1))
    maps = synthetic_maps(cfg.coils, cfg.size, cfg.size) if cfg.coils > 1 else None
    ys = np.stack([
        simulate_measurement(x, maps, triple.m, cfg.noise_std, NoiseDraw(cfg.seed, 2).child(i)).data
        for i, x in enumerate(train_x)
    ])
    test_y = [
        simulate_measurement(x, maps, triple.m_prime, cfg.noise_std, NoiseDraw(cfg.seed, 3).child(i))
        for i, x in enumerate(test_x)
    ]
    return TrainingSet(measurements=ys, triple=triple, maps=maps), test_x, test_y


def train_config(cfg: DeskConfig, method: str) -> TrainConfig:
    return TrainConfig(
        process_kind=METHOD_KIND[method],
        conditional=method == "c_ambient_ddm",
        iterations=cfg.iterations,
        batch_size=cfg.batch_size,
        learning_rate=cfg.learning_rate,
        seed=cfg.seed,
        T=cfg.T,
        sigma0=cfg.sigma0,
        hidden=cfg.hidden,
        output_gain=cfg.output_gain,
    )


def infer(method: str, params, tcfg: TrainConfig, data: TrainingSet, test_y, steps: int, seed: int):
    tr = data.triple
    out = []
    for i, y in enumerate(test_y):
        draw = NoiseDraw(seed, 4).child(i)
        if method == "selfdb":
            out.append(sample_selfdb(params, tcfg.bridge_schedule(), y, tr, steps, draw, data.maps))
        elif method == "ambient_db":
            out.append(sample_ambient_db(params, tcfg.bridge_schedule(), y, tr.m_prime, steps, draw, data.maps))
        else:
            shape = y.shape[-2:]
            out.append(sample_ddm(params, tcfg.ddm_schedule(), shape, draw, condition=apply_mask(tr.m_prime, y),
                                  m_prime=tr.m_prime, maps=data.maps))
    return out


def run_desk_experiment(cfg: DeskConfig, step_sweep=(), keep_params: bool = False):
    """Train every method in ``cfg.methods`` and score it on the held-out phantoms.

    ``step_sweep`` lists extra SelfDB inference step counts to score; their
    NRMSE lands under keys ``selfdb@<steps>``.
    """
    from .operators import adjoint_A

    data, test_x, test_y = prepare(cfg)
    res = DeskResult()
    res.zero_filled_nrmse = evaluate([adjoint_A(y, data.maps) for y in test_y], test_x).nrmse
    trained = {}
    for method in cfg.methods:
        tcfg = train_config(cfg, method)
        t0 = time.perf_counter()
        params, records = train(tcfg, data)
        recon = infer(method, params, tcfg, data, test_y, cfg.steps, cfg.seed)
        rep = evaluate(recon, test_x)
        res.nrmse[method], res.ssim[method] = rep.nrmse, rep.ssim
        res.seconds[method] = time.perf_counter() - t0
        log.info("%s: nrmse %.4f ssim %.4f (%.0f s)", method, rep.nrmse, rep.ssim, res.seconds[method])
        trained[method] = (params, tcfg)
    if step_sweep and "selfdb" in trained:
        params, tcfg = trained["selfdb"]
        for steps in step_sweep:
            rep = evaluate(infer("selfdb", params, tcfg, data, test_y, steps, cfg.seed), test_x)
            res.nrmse[f"selfdb@{steps}"], res.ssim[f"selfdb@{steps}"] = rep.nrmse, rep.ssim
    return (res, trained) if keep_params else res
