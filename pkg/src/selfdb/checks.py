"""Self-contained property suites run by ``selfdb check``.

Each suite returns a list of :class:`Check` results with the measured value
and the tolerance it was held to.
"""

from __future__ import annotations

import tempfile
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dataio
from .model import Arch, init_params
from .operators import (
    SensitivityMaps,
    adjoint_A,
    apply_mask,
    forward_A,
    fourier,
    make_nested_triple,
    simulate_measurement,
    synthetic_maps,
)
from .processes import ambient_db_forward, ambient_ddm_forward, db_forward, ddm_forward, selfdb_forward
from .samplers import sample_db, sample_selfdb
from .schedules import constant_sigma, linear_beta_schedule
from .tensors import NoiseDraw, gaussian
from .training import loss_ambient_db, loss_ambient_ddm, loss_db, loss_ddm, loss_selfdb

__all__ = ["Check", "SUITES", "run_suite", "identity_errors", "adjoint_errors", "loss_directional_errors", "oracle_sampler_errors"]


@dataclass
class Check:
    name: str
    value: float
    tolerance: float

    @property
    def passed(self) -> bool:
        if self.tolerance == 0:
            return self.value == 0
        return bool(self.value < self.tolerance)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        bound = "== 0" if self.tolerance == 0 else f"< {self.tolerance:.0e}"
        return f"{status}  {self.name}: {self.value:.3e} ({bound})"


def _rel(a, b) -> float:
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), np.finfo(float).tiny))


def identity_errors(n_pairs=20, n_t=10, size=64, seed=0):
    """Max relative error of the two collapsed-process identities over random noiseless data."""
    from .dataio import PhantomSpec, gen_phantom

    spec = PhantomSpec(size=size, seed=seed)
    ddm = linear_beta_schedule(n_t, 0.05, 0.5)
    bridge = constant_sigma(0.05)
    worst_ddm = worst_db = 0.0
    for i in range(n_pairs):
        base = NoiseDraw(seed, 10).child(i)
        x = gen_phantom(spec, i)
        triple = make_nested_triple(size, (1 / 4, 1 / 6, 1 / 8), 1 / 16, base.child(0))
        y = simulate_measurement(x, None, triple.m, 0.0, None)
        for k, t in enumerate(np.linspace(0, 1, n_t)):
            eps = gaussian((size, size), base.child(1, k))
            lhs = ambient_db_forward(y, triple.m_prime, t, bridge, eps, m=triple.m).state.data
            rhs = apply_mask(triple.m_prime, forward_A(db_forward(x, y, t, bridge, eps).state)).data
            worst_db = max(worst_db, _rel(lhs, rhs))
            step = k + 1
            lhs = ambient_ddm_forward(y, triple.m_prime, step, ddm, eps, m=triple.m).state.data
            rhs = apply_mask(triple.m_prime, forward_A(ddm_forward(x, step, ddm, eps).state)).data
            worst_ddm = max(worst_ddm, _rel(lhs, rhs))
    return worst_ddm, worst_db


def adjoint_errors(trials=100, size=32, coils=4, seed=0):
    """(adjoint identity, A^H A = I, Fourier unitarity) worst relative errors."""
    maps = synthetic_maps(coils, size, size)
    adj = gram = unit = 0.0
    for i in range(trials):
        d = NoiseDraw(seed, 20).child(i)
        x = gaussian((size, size), d.child(0))
        y = gaussian((coils, size, size), d.child(1))
        Ax = forward_A(x, maps)
        lhs = np.vdot(y, Ax)
        rhs = np.vdot(adjoint_A(y, maps), x)
        adj = max(adj, abs(lhs - rhs) / (np.linalg.norm(x) * np.linalg.norm(y)))
        gram = max(gram, _rel(adjoint_A(Ax, maps), x))
        unit = max(unit, abs(np.linalg.norm(fourier(x)) - np.linalg.norm(x)) / np.linalg.norm(x))
    return adj, gram, unit


def _micro_setup(seed=0, size=16):
    arch = Arch(size, size, hidden=(6, 6), embed_dims=4)
    params = init_params(arch, NoiseDraw(seed, 30))
    from .dataio import PhantomSpec, gen_phantom

    x = gen_phantom(PhantomSpec(size=size, seed=seed), 0)
    triple = make_nested_triple(size, (1 / 2, 3 / 8, 1 / 4), 1 / 8, NoiseDraw(seed, 31))
    y = simulate_measurement(x, None, triple.m, 0.0, None)
    return params, x, y, triple


def loss_directional_errors(h=1e-5, seed=0) -> dict[str, float]:
    """Relative error of central differences along a random direction, per loss."""
    params, x, y, triple = _micro_setup(seed)
    size = x.shape[0]
    ddm = linear_beta_schedule(10, 0.01, 0.3)
    bridge = constant_sigma(0.05)
    eps_img = gaussian((size, size), NoiseDraw(seed, 32))
    eps_meas = gaussian(y.shape, NoiseDraw(seed, 33))
    y_prime = apply_mask(triple.m_prime, y)
    cond_params = init_params(Arch(size, size, hidden=(6, 6), embed_dims=4, cond_channels=2), NoiseDraw(seed, 34))
    losses = {
        "ddm": (params, lambda p: loss_ddm(p, x, 5, eps_img, ddm)),
        "ambient_ddm": (params, lambda p: loss_ambient_ddm(p, y, triple.m, triple.m_prime, 5, eps_img, ddm)),
        "c_ambient_ddm": (cond_params, lambda p: loss_ambient_ddm(p, y, triple.m, triple.m_prime, 5, eps_img, ddm)),
        "db": (params, lambda p: loss_db(p, x, y_prime, 0.4, eps_img, bridge)),
        "ambient_db": (params, lambda p: loss_ambient_db(p, y, triple.m, triple.m_prime, 0.4, eps_img, bridge)),
        "selfdb": (params, lambda p: loss_selfdb(p, y, triple, 0.4, eps_meas, bridge)),
    }
    v = NoiseDraw(seed, 35).rng().standard_normal(params.param_count)
    out = {}
    for name, (p0, fn) in losses.items():
        v = NoiseDraw(seed, 35).rng().standard_normal(p0.param_count)
        _, g = fn(p0)
        lp, _ = fn(p0.with_theta(p0.theta + h * v))
        lm, _ = fn(p0.with_theta(p0.theta - h * v))
        fd = (lp - lm) / (2 * h)
        out[name] = abs(fd - g @ v) / abs(g @ v)
    return out


def oracle_sampler_errors(steps_list=(1, 2, 4), size=32, seed=0) -> dict[str, float]:
    """Relative recovery error of DB and SelfDB sampling with a ground-truth oracle and sigma = 0."""
    from .dataio import PhantomSpec, gen_phantom

    x = gen_phantom(PhantomSpec(size=size, seed=seed), 1)
    triple = make_nested_triple(size, (1 / 4, 1 / 6, 1 / 8), 1 / 16, NoiseDraw(seed, 40))
    y_test = simulate_measurement(x, None, triple.m_prime, 0.0, None)
    oracle = lambda sample: x
    sched = constant_sigma(0.0)
    out = {}
    for steps in steps_list:
        out[f"db steps={steps}"] = _rel(sample_db(oracle, sched, y_test, steps, NoiseDraw(seed, 41)), x)
        out[f"selfdb steps={steps}"] = _rel(sample_selfdb(oracle, sched, y_test, triple, steps, NoiseDraw(seed, 42)), x)
    return out


def one_step_selfdb_error(params, y_test, triple, seed=0) -> float:
    """0.0 iff steps=1 makes steps+1 = 2 calls and returns the last call's output bit-for-bit."""
    from .model import forward

    calls = []
    out = sample_selfdb(params, constant_sigma(0.01), y_test, triple, 1, NoiseDraw(seed, 50), calls=calls)
    if len(calls) != 2:
        return float("inf")
    return float(np.max(np.abs(out - forward(params, calls[-1]))))


def one_step_db_error(params, y_test, seed=0) -> float:
    """0.0 iff one DB step returns exactly f(x_1, 1)."""
    from .model import forward
    from .processes import DiffusionSample

    sched = constant_sigma(0.01)
    x1 = adjoint_A(y_test) + sched.sigma(1.0) * gaussian(y_test.shape[-2:], NoiseDraw(seed, 51).child(0))
    out = sample_db(params, sched, y_test, 1, NoiseDraw(seed, 51))
    return float(np.max(np.abs(out - forward(params, DiffusionSample(x1, 1.0, "db", 1.0)))))


def _identities():
    e_ddm, e_db = identity_errors()
    adj, gram, unit = adjoint_errors()
    return [
        Check("ambient-DDM collapse identity (20 pairs x 10 t)", e_ddm, 1e-8),
        Check("ambient-DB collapse identity (20 pairs x 10 t)", e_db, 1e-8),
        Check("adjoint test <Ax,y> = <x,A^H y> (100 trials)", adj, 1e-10),
        Check("A^H A = I with unit-normalized maps", gram, 1e-8),
        Check("Fourier unitarity", unit, 1e-10),
    ]


def _gradients():
    return [Check(f"directional derivative of {k} loss", v, 1e-5) for k, v in loss_directional_errors().items()]


def _samplers():
    checks = [Check(f"oracle recovery, {k}", v, 1e-8) for k, v in oracle_sampler_errors().items()]
    params, x, y, triple = _micro_setup()
    y_test = apply_mask(triple.m_prime, y)
    checks.append(Check("one-step SelfDB returns one network evaluation", one_step_selfdb_error(params, y_test, triple), 0.0))
    checks.append(Check("one-step DB returns one network evaluation", one_step_db_error(params, y_test), 0.0))
    return checks


def _formats():
    from .dataio import PhantomSpec, gen_dataset

    checks = []
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        ds = gen_dataset(PhantomSpec(size=16), 3)
        dataio.write_dataset(ds, tmp / "d.sdbd")
        checks.append(Check("SDBD round trip", float(dataio.read_dataset(tmp / "d.sdbd") != ds), 0.0))
        triple = make_nested_triple(64, (1 / 4, 1 / 6, 1 / 8), 1 / 16, NoiseDraw(0))
        dataio.write_triple(triple, tmp / "masks")
        checks.append(Check("SDBM triple round trip", float(dataio.read_triple(tmp / "masks") != triple), 0.0))
        params = init_params(Arch(16, 16, hidden=(4,)), NoiseDraw(0))
        dataio.write_checkpoint(params, tmp / "c.sdbc", {"process_kind": "selfdb"})
        back, meta = dataio.read_checkpoint(tmp / "c.sdbc")
        same = np.array_equal(back.theta, params.theta) and back.arch == params.arch and meta["process_kind"] == "selfdb"
        checks.append(Check("SDBC round trip", float(not same), 0.0))
        raw = bytearray((tmp / "c.sdbc").read_bytes())
        raw[-10] ^= 0xFF
        (tmp / "bad.sdbc").write_bytes(bytes(raw))
        try:
            dataio.read_checkpoint(tmp / "bad.sdbc")
            detected = False
        except dataio.ChecksumError:
            detected = True
        checks.append(Check("SDBC corruption detected by CRC", float(not detected), 0.0))
        ys = np.stack([simulate_measurement(x, None, triple.m_prime, 0.0, None).data for x in gen_dataset(PhantomSpec(size=64), 2).images])
        dataio.write_measurements(ys, "masks/m_prime.sdbm", tmp / "y.sdby")
        meas, mask, _ = dataio.read_measurements(tmp / "y.sdby")
        same = np.array_equal(np.stack([m.data for m in meas]), ys) and mask == triple.m_prime
        checks.append(Check("SDBY round trip with mask reference", float(not same), 0.0))
    return checks


SUITES = {"identities": _identities, "gradients": _gradients, "samplers": _samplers, "formats": _formats}


def run_suite(name: str) -> list[Check]:
    return SUITES[name]()
