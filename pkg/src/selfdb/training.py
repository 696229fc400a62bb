"""Training objectives for the five processes and the Adam training loop.

Image-target losses (``ddm``, ``db``) compare the network output with the clean
image. Measurement-target losses (``ambient_ddm``, ``ambient_db``, ``selfdb``)
push the output through ``M A`` and compare with the available measurement.
Every loss returns ``(value, grad)``; ``grad`` is ``None`` when a plain callable
stands in for the network.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from typing import Callable

import numpy as np

from .errors import InvalidArgument, TrainingDiverged
from .model import Arch, ModelParams, apply_network, init_params, network_input, network_vjp
from .operators import MaskTriple, Measurement, SamplingMask, SensitivityMaps, adjoint_A, apply_mask, forward_A
from .processes import (
    PROCESS_KINDS,
    DiffusionSample,
    ambient_db_forward,
    ambient_ddm_forward,
    db_forward,
    ddm_forward,
    selfdb_forward,
)
from .schedules import BridgeSchedule, DdmSchedule, constant_sigma, linear_beta_schedule
from .tensors import NoiseDraw, gaussian

__all__ = [
    "TrainConfig",
    "TrainingSet",
    "LossRecord",
    "Adam",
    "loss_ddm",
    "loss_ambient_ddm",
    "loss_db",
    "loss_ambient_db",
    "loss_selfdb",
    "batch_loss",
    "build_sample",
    "train",
    "write_loss_csv",
]

log = logging.getLogger(__name__)

Network = ModelParams | Callable[[DiffusionSample], np.ndarray]


@dataclass
class TrainConfig:
    process_kind: str
    iterations: int = 500
    batch_size: int = 8
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    # DDM family
    T: int = 100
    beta_min: float = 1e-3
    beta_max: float = 0.2
    # bridge family
    sigma0: float = 0.01
    conditional: bool = False
    hidden: tuple[int, ...] = (32, 32, 32)
    embed_dims: int = 8
    output_gain: float = 1.0
    log_every: int = 10

    def __post_init__(self):
        self.hidden = tuple(self.hidden)
        if self.process_kind not in PROCESS_KINDS:
            raise InvalidArgument(f"process_kind must be one of {PROCESS_KINDS}")
        if self.learning_rate <= 0:
            raise InvalidArgument("learning_rate must be positive")
        if self.batch_size < 1:
            raise InvalidArgument("batch_size must be >= 1")
        if self.iterations < 0:
            raise InvalidArgument("iterations must be >= 0")
        if self.log_every < 1:
            raise InvalidArgument("log_every must be >= 1")
        if self.conditional and self.process_kind != "ambient_ddm":
            raise InvalidArgument("conditional inputs are only defined for ambient_ddm")

    @property
    def is_ddm_family(self) -> bool:
        return self.process_kind in ("ddm", "ambient_ddm")

    def ddm_schedule(self) -> DdmSchedule:
        return linear_beta_schedule(self.T, self.beta_min, self.beta_max)

    def bridge_schedule(self) -> BridgeSchedule:
        return constant_sigma(self.sigma0)

    def arch(self, height: int, width: int) -> Arch:
        return Arch(
            height,
            width,
            hidden=self.hidden,
            embed_dims=self.embed_dims,
            cond_channels=2 if self.conditional else 0,
            output_gain=self.output_gain,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def field_names(cls) -> set[str]:
        return {f.name for f in fields(cls)}


@dataclass(eq=False)
class TrainingSet:
    """Inputs for :func:`train`.

    ``images`` are clean targets (``ddm``, ``db``). ``measurements`` is a
    ``(N, coils, H, W)`` stack: the paired degraded inputs for ``db``, or the
    only available data, sampled with ``triple.m``, for the self-supervised kinds.
    """

    images: np.ndarray | None = None
    measurements: np.ndarray | None = None
    triple: MaskTriple | None = None
    maps: SensitivityMaps | None = None

    def __len__(self):
        src = self.images if self.images is not None else self.measurements
        return 0 if src is None else len(src)

    @property
    def image_shape(self) -> tuple[int, int]:
        src = self.images if self.images is not None else self.measurements
        return tuple(src.shape[-2:])


@dataclass
class LossRecord:
    iteration: int
    loss_value: float
    wall_time: float


class Adam:
    def __init__(self, n: int, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.k = 0

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.k += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad**2
        mhat = self.m / (1 - self.beta1**self.k)
        vhat = self.v / (1 - self.beta2**self.k)
        return theta - self.lr * mhat / (np.sqrt(vhat) + self.eps)


def _measurement_residual(out, y: Measurement, m: SamplingMask, maps):
    return apply_mask(m, forward_A(out, maps)).data - y.data


def batch_loss(net: Network, samples, targets, m: SamplingMask | None = None, maps=None, conds=None):
    """Mean over the batch of squared l2 errors, and its theta-gradient.

    With ``m=None`` targets are images; otherwise they are measurements and the
    residual is ``M A f - y``.
    """
    if isinstance(net, ModelParams):
        imgs = np.stack([network_input(s, maps) for s in samples])
        taus = np.array([s.tau for s in samples])
        cond_imgs = None if conds is None else np.stack([adjoint_A(c, maps) for c in conds])
        outs, tape = apply_network(net, imgs, taus, cond_imgs, keep_cache=True)
    else:
        outs, tape = np.stack([net(s) for s in samples]), None
    B = len(samples)
    total = 0.0
    out_grads = np.empty_like(outs)
    for b in range(B):
        if m is None:
            r = outs[b] - np.asarray(targets[b])
            out_grads[b] = 2 * r / B
        else:
            r = _measurement_residual(outs[b], targets[b], m, maps)
            out_grads[b] = 2 * adjoint_A(apply_mask(m, r), maps) / B
        total += float(np.sum(r.real**2 + r.imag**2))
    value = total / B
    grad = None if tape is None else network_vjp(net, tape, out_grads)
    return value, grad


def loss_ddm(net: Network, x, t: int, eps, sched: DdmSchedule):
    return batch_loss(net, [ddm_forward(x, t, sched, eps)], [x])


def loss_db(net: Network, x, y: Measurement, t: float, eps, sched: BridgeSchedule, maps=None):
    return batch_loss(net, [db_forward(x, y, t, sched, eps, maps)], [x], maps=maps)


def _cond(net, y, m_prime):
    if isinstance(net, ModelParams) and net.arch.cond_channels:
        return [apply_mask(m_prime, y)]
    return None


def loss_ambient_ddm(net: Network, y: Measurement, m: SamplingMask, m_prime: SamplingMask, t: int, eps, sched: DdmSchedule, maps=None):
    """Networks with conditioning channels additionally receive ``M'y``."""
    sample = ambient_ddm_forward(y, m_prime, t, sched, eps, maps, m=m)
    return batch_loss(net, [sample], [y], m=m, maps=maps, conds=_cond(net, y, m_prime))


def loss_ambient_db(net: Network, y: Measurement, m: SamplingMask, m_prime: SamplingMask, t: float, eps, sched: BridgeSchedule, maps=None):
    sample = ambient_db_forward(y, m_prime, t, sched, eps, maps, m=m)
    return batch_loss(net, [sample], [y], m=m, maps=maps)


def loss_selfdb(net: Network, y: Measurement, triple: MaskTriple, t: float, eps, sched: BridgeSchedule, maps=None):
    sample = selfdb_forward(y, triple, t, sched, eps)
    return batch_loss(net, [sample], [y], m=triple.m, maps=maps)


def build_sample(kind: str, data: TrainingSet, i: int, t, eps_draw: NoiseDraw, ddm_sched, bridge_sched):
    """Training input for dataset element ``i``; returns ``(sample, target, condition)``."""
    H, W = data.image_shape
    tr = data.triple
    if kind == "ddm":
        x = data.images[i]
        return ddm_forward(x, t, ddm_sched, gaussian((H, W), eps_draw)), x, None
    if kind == "db":
        x = data.images[i]
        y = Measurement(data.measurements[i])
        return db_forward(x, y, t, bridge_sched, gaussian((H, W), eps_draw), data.maps), x, None
    y = Measurement(data.measurements[i], tr.m.ident)
    if kind == "ambient_ddm":
        s = ambient_ddm_forward(y, tr.m_prime, t, ddm_sched, gaussian((H, W), eps_draw), data.maps, m=tr.m)
        return s, y, apply_mask(tr.m_prime, y)
    if kind == "ambient_db":
        s = ambient_db_forward(y, tr.m_prime, t, bridge_sched, gaussian((H, W), eps_draw), data.maps, m=tr.m)
        return s, y, None
    s = selfdb_forward(y, tr, t, bridge_sched, gaussian(y.shape, eps_draw))
    return s, y, None


def _check_data(cfg: TrainConfig, data: TrainingSet):
    if len(data) == 0:
        raise InvalidArgument("training set is empty")
    kind = cfg.process_kind
    if kind in ("ddm", "db") and data.images is None:
        raise InvalidArgument(f"{kind} training needs clean images")
    if kind != "ddm" and data.measurements is None:
        raise InvalidArgument(f"{kind} training needs measurements")
    if kind in ("ambient_ddm", "ambient_db", "selfdb") and data.triple is None:
        raise InvalidArgument(f"{kind} training needs a mask triple")


def train(cfg: TrainConfig, data: TrainingSet, params: ModelParams | None = None):
    """Run ``cfg.iterations`` Adam steps. Returns ``(params, records)``.

    Randomness per iteration i and batch slot b comes from
    ``NoiseDraw(seed).child(1, i, b)``; initialization uses ``child(0)``.
    """
    _check_data(cfg, data)
    H, W = data.image_shape
    if params is None:
        params = init_params(cfg.arch(H, W), NoiseDraw(cfg.seed).child(0))
    kind = cfg.process_kind
    ddm_sched = cfg.ddm_schedule() if cfg.is_ddm_family else None
    bridge_sched = None if cfg.is_ddm_family else cfg.bridge_schedule()
    m = data.triple.m if kind in ("ambient_ddm", "ambient_db", "selfdb") else None
    opt = Adam(params.param_count, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps)
    theta = params.theta.copy()
    records = []
    t0 = time.perf_counter()
    N = len(data)
    for it in range(cfg.iterations):
        draw = NoiseDraw(cfg.seed).child(1, it)
        rng = draw.rng()
        idx = rng.choice(N, size=cfg.batch_size, replace=N < cfg.batch_size)
        if cfg.is_ddm_family:
            ts = rng.integers(1, cfg.T + 1, size=cfg.batch_size)
        else:
            ts = rng.uniform(0.0, 1.0, size=cfg.batch_size)
        samples, targets, conds = [], [], []
        for b, (i, t) in enumerate(zip(idx, ts)):
            s, tgt, c = build_sample(kind, data, int(i), t.item(), draw.child(b), ddm_sched, bridge_sched)
            samples.append(s)
            targets.append(tgt)
            conds.append(c)
        current = params.with_theta(theta)
        value, grad = batch_loss(current, samples, targets, m=m, maps=data.maps, conds=conds if cfg.conditional else None)
        if not np.isfinite(value) or not np.all(np.isfinite(grad)):
            raise TrainingDiverged(it, value)
        theta = opt.step(theta, grad)
        if it % cfg.log_every == 0:
            records.append(LossRecord(it, value, time.perf_counter() - t0))
            log.debug("iter %d loss %.6g", it, value)
    return params.with_theta(theta), records


def write_loss_csv(records, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "loss", "wall_time_s"])
        for r in records:
            w.writerow([r.iteration, repr(r.loss_value), f"{r.wall_time:.3f}"])
