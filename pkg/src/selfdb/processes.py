"""Forward (noising/degrading) processes that build network training inputs.

Image-domain kinds (``ddm``, ``db``) return an image state; measurement-domain
kinds (``ambient_ddm``, ``ambient_db``, ``selfdb``) return a :class:`Measurement`.
Noise may be passed as an explicit array or as a :class:`NoiseDraw`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument
from .operators import MaskTriple, Measurement, SamplingMask, SensitivityMaps, adjoint_A, apply_mask, forward_A
from .schedules import BridgeSchedule, DdmSchedule
from .tensors import NoiseDraw, gaussian

__all__ = [
    "PROCESS_KINDS",
    "IMAGE_KINDS",
    "DiffusionSample",
    "ddm_forward",
    "ambient_ddm_forward",
    "db_forward",
    "ambient_db_forward",
    "selfdb_forward",
]

PROCESS_KINDS = ("ddm", "ambient_ddm", "db", "ambient_db", "selfdb")
IMAGE_KINDS = ("ddm", "db")


@dataclass(frozen=True, eq=False)
class DiffusionSample:
    state: np.ndarray | Measurement
    t: float
    process_kind: str
    tau: float  # t rescaled to [0, 1]; what the network's time embedding sees
    noise_used: NoiseDraw | None = None

    def __post_init__(self):
        if self.process_kind not in PROCESS_KINDS:
            raise InvalidArgument(f"unknown process kind {self.process_kind!r}")
        in_image = not isinstance(self.state, Measurement)
        if in_image != (self.process_kind in IMAGE_KINDS):
            raise InvalidArgument(f"{self.process_kind} state in the wrong domain")
        if not (0 <= self.tau <= 1):
            raise InvalidArgument(f"normalized time {self.tau} outside [0, 1]")


def _noise(eps, shape):
    if isinstance(eps, NoiseDraw):
        return gaussian(shape, eps), eps
    eps = np.asarray(eps)
    if eps.shape != tuple(shape):
        raise InvalidArgument(f"noise shape {eps.shape} does not match {tuple(shape)}")
    return eps, None


def _check_bridge_time(t):
    if not (0 <= t <= 1):
        raise InvalidArgument(f"bridge time t={t} outside [0, 1]")


def _check_nested(y: Measurement, m_prime: SamplingMask, m: SamplingMask | None):
    if m is not None:
        if not m_prime.issubset(m):
            raise InvalidArgument("m_prime is not nested inside the measurement mask")
        if not y.consistent_with(m):
            raise InvalidArgument("measurement has samples outside its mask")
    elif y.data.shape[-1] != m_prime.width:
        raise InvalidArgument("mask width does not match measurement")


def ddm_forward(x, t: int, sched: DdmSchedule, eps) -> DiffusionSample:
    sched.check_step(t)
    x = np.asarray(x)
    eps, draw = _noise(eps, x.shape)
    ab = sched.alpha_bar_at(t)
    xt = np.sqrt(ab) * x + np.sqrt(1 - ab) * eps
    return DiffusionSample(xt, t, "ddm", t / sched.T, draw)


def ambient_ddm_forward(
    y: Measurement,
    m_prime: SamplingMask,
    t: int,
    sched: DdmSchedule,
    eps,
    maps: SensitivityMaps | None = None,
    m: SamplingMask | None = None,
) -> DiffusionSample:
    """``sqrt(ab) M'y + sqrt(1-ab) M'A eps`` with image-domain ``eps``.

    ``m`` (the mask of ``y``), when given, is used to verify nesting.
    """
    sched.check_step(t)
    _check_nested(y, m_prime, m)
    eps, draw = _noise(eps, y.shape[-2:])
    ab = sched.alpha_bar_at(t)
    data = np.sqrt(ab) * apply_mask(m_prime, y).data + np.sqrt(1 - ab) * apply_mask(m_prime, forward_A(eps, maps)).data
    return DiffusionSample(Measurement(data, m_prime.ident), t, "ambient_ddm", t / sched.T, draw)


def db_forward(x, y: Measurement, t: float, sched: BridgeSchedule, eps, maps: SensitivityMaps | None = None) -> DiffusionSample:
    _check_bridge_time(t)
    x = np.asarray(x)
    eps, draw = _noise(eps, x.shape)
    xt = (1 - t) * x + t * adjoint_A(y, maps) + sched.sigma(t) * eps
    return DiffusionSample(xt, t, "db", t, draw)


def ambient_db_forward(
    y: Measurement,
    m_prime: SamplingMask,
    t: float,
    sched: BridgeSchedule,
    eps,
    maps: SensitivityMaps | None = None,
    m: SamplingMask | None = None,
) -> DiffusionSample:
    """Collapsed bridge state ``M'y + sigma_t M'A eps``; exact only for noiseless y and orthogonal A."""
    _check_bridge_time(t)
    _check_nested(y, m_prime, m)
    eps, draw = _noise(eps, y.shape[-2:])
    data = apply_mask(m_prime, y).data + sched.sigma(t) * apply_mask(m_prime, forward_A(eps, maps)).data
    return DiffusionSample(Measurement(data, m_prime.ident), t, "ambient_db", t, draw)


def selfdb_forward(y: Measurement, triple: MaskTriple, t: float, sched: BridgeSchedule, eps) -> DiffusionSample:
    """``(1-t) M_bar y + t M'y + sigma_t eps`` with ``eps`` on the full k-space grid."""
    _check_bridge_time(t)
    if y.data.shape[-1] != triple.m.width:
        raise InvalidArgument("mask width does not match measurement")
    if y.mask_id and y.mask_id != triple.m.ident:
        raise InvalidArgument(f"measurement mask {y.mask_id} is not the triple's outer mask {triple.m.ident}")
    if not y.consistent_with(triple.m):
        raise InvalidArgument("measurement has samples outside the triple's outer mask")
    eps, draw = _noise(eps, y.shape)
    data = (1 - t) * apply_mask(triple.m_bar, y).data + t * apply_mask(triple.m_prime, y).data
    sigma = sched.sigma(t)
    data = data + sigma * eps
    # with noise the state covers the whole grid and belongs to no mask
    mask_id = triple.m_bar.ident if sigma == 0 else ""
    return DiffusionSample(Measurement(data, mask_id), t, "selfdb", t, draw)
