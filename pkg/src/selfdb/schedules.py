"""Noise schedules: cumulative alpha products for the DDM family, sigma(t) for bridges."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InvalidArgument, ScheduleValidityError

__all__ = [
    "DdmSchedule",
    "BridgeSchedule",
    "linear_beta_schedule",
    "constant_sigma",
    "table_sigma",
    "time_grid",
]


@dataclass(frozen=True, eq=False)
class DdmSchedule:
    """Per-step ``alpha[t]`` for t = 1..T (stored 0-based) and their running product."""

    alpha: np.ndarray
    alpha_bar: np.ndarray = field(init=False)

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=np.float64)
        if alpha.ndim != 1 or alpha.size < 1:
            raise InvalidArgument("alpha must be a non-empty 1-D table")
        if np.any(alpha <= 0) or np.any(alpha > 1):
            raise InvalidArgument("alpha values must lie in (0, 1]")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "alpha_bar", np.cumprod(alpha))

    @property
    def T(self) -> int:
        return self.alpha.size

    def alpha_at(self, t: int) -> float:
        self.check_step(t)
        return float(self.alpha[t - 1])

    def alpha_bar_at(self, t: int) -> float:
        """``alpha_bar`` with the convention ``alpha_bar[0] = 1``."""
        if t == 0:
            return 1.0
        self.check_step(t)
        return float(self.alpha_bar[t - 1])

    def check_step(self, t: int):
        if not (1 <= t <= self.T) or int(t) != t:
            raise InvalidArgument(f"step t={t} outside 1..{self.T}")

    def reverse_coefficients(self, t: int) -> tuple[float, float, float]:
        """``(mu1, mu2, Sigma)`` of the ancestral update from step t to t-1."""
        a = self.alpha_at(t)
        ab = self.alpha_bar_at(t)
        ab_prev = self.alpha_bar_at(t - 1)
        if ab >= 1.0:
            # noiseless step: x_t is already x, the network output is taken as is
            return 0.0, 1.0, 0.0
        mu1 = np.sqrt(a) * (1 - ab_prev) / (1 - ab)
        mu2 = np.sqrt(ab_prev) * (1 - a) / (1 - ab)
        var = (1 - a) * (1 - ab_prev) / (1 - ab)
        return float(mu1), float(mu2), float(var)

    def to_dict(self) -> dict:
        return {"kind": "table", "alpha": self.alpha.tolist()}


def linear_beta_schedule(T: int, beta_min: float, beta_max: float) -> DdmSchedule:
    if T < 2:
        raise InvalidArgument("linear schedule needs T >= 2")
    if not (0 <= beta_min <= beta_max < 1):
        raise InvalidArgument(f"need 0 <= beta_min <= beta_max < 1, got ({beta_min}, {beta_max})")
    betas = beta_min + np.arange(T) * (beta_max - beta_min) / (T - 1)
    return DdmSchedule(1.0 - betas)


@dataclass(frozen=True)
class BridgeSchedule:
    """``sigma(t)`` on t in [0, 1]."""

    kind: str
    sigma_fn: Callable[[float], float]
    params: tuple = ()

    def sigma(self, t: float) -> float:
        if not (0 <= t <= 1):
            raise InvalidArgument(f"bridge time t={t} outside [0, 1]")
        return float(self.sigma_fn(t))

    def step_noise_scale(self, t: float, t_next: float) -> float:
        """``sqrt(sigma(t_next)^2 - sigma(t)^2)`` for a reverse step t -> t_next < t."""
        rad = self.sigma(t_next) ** 2 - self.sigma(t) ** 2
        if rad < 0:
            raise ScheduleValidityError(
                f"sigma must be nonincreasing in t: sigma({t_next})^2 - sigma({t})^2 = {rad} < 0"
            )
        return float(np.sqrt(rad))

    def validate(self, n: int = 257):
        ts = np.linspace(0, 1, n)
        s = np.array([self.sigma(t) for t in ts])
        if np.any(s < 0):
            raise ScheduleValidityError("sigma must be nonnegative")
        if np.any(np.diff(s) > 0):
            raise ScheduleValidityError("sigma must be nonincreasing in t")

    def to_dict(self) -> dict:
        if self.kind == "constant":
            return {"kind": "constant", "sigma0": self.params[0]}
        return {"kind": "table", "t": list(self.params[0]), "sigma": list(self.params[1])}


def constant_sigma(sigma0: float) -> BridgeSchedule:
    if sigma0 < 0:
        raise InvalidArgument("sigma0 must be nonnegative")
    sigma0 = float(sigma0)
    return BridgeSchedule("constant", lambda t: sigma0, (sigma0,))


def table_sigma(ts, values) -> BridgeSchedule:
    """Piecewise-linear custom schedule through the points ``(ts[i], values[i])``."""
    ts = tuple(float(t) for t in ts)
    values = tuple(float(v) for v in values)
    if len(ts) != len(values) or len(ts) < 2 or list(ts) != sorted(ts) or ts[0] > 0 or ts[-1] < 1:
        raise InvalidArgument("table must cover [0, 1] with increasing t")
    if min(values) < 0:
        raise InvalidArgument("sigma values must be nonnegative")
    return BridgeSchedule("custom", lambda t: np.interp(t, ts, values), (ts, values))


def time_grid(steps: int) -> list[float]:
    if steps < 1 or int(steps) != steps:
        raise InvalidArgument("steps must be a positive integer")
    return [1.0 - k / steps for k in range(steps + 1)]
