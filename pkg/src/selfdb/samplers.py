"""Reverse processes: DDM ancestral sampling, DB iteration and SelfDB inference.

``net`` is either :class:`ModelParams` or a plain callable ``f(sample) -> image``
(handy for oracle stubs). Pass a list as ``trajectory`` to collect
``(t, image)`` pairs along the way.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidArgument
from .model import ModelParams, forward
from .operators import MaskTriple, Measurement, SamplingMask, SensitivityMaps, adjoint_A, apply_mask, forward_A
from .processes import DiffusionSample
from .schedules import BridgeSchedule, DdmSchedule, time_grid
from .tensors import NoiseDraw, gaussian

__all__ = ["sample_ddm", "sample_db", "sample_ambient_db", "sample_selfdb", "as_denoiser"]


def as_denoiser(net, maps: SensitivityMaps | None = None, condition=None):
    if isinstance(net, ModelParams):
        if net.arch.cond_channels and condition is None:
            raise InvalidArgument("conditional network needs a condition")
        if not net.arch.cond_channels:
            condition = None
        return lambda sample: forward(net, sample, maps, condition)
    if not callable(net):
        raise InvalidArgument("net must be ModelParams or a callable")
    return net


def _record(traj, t, img):
    if traj is not None:
        traj.append((float(t), np.array(img, copy=True)))


def sample_ddm(
    net,
    sched: DdmSchedule,
    shape,
    draw: NoiseDraw,
    condition: Measurement | None = None,
    m_prime: SamplingMask | None = None,
    maps: SensitivityMaps | None = None,
    raw_variance: bool = False,
    trajectory: list | None = None,
) -> np.ndarray:
    """Ancestral sampling from ``x_T ~ N(0, I)`` down to ``x_0``.

    With ``m_prime`` each iterate is degraded to ``M'A x_t`` before the
    network sees it (ambient inference); ``condition`` feeds the measurement as
    extra channels. Noise enters as ``sqrt(Sigma_t) eps`` unless
    ``raw_variance`` selects the literal ``Sigma_t eps``.
    """
    if isinstance(net, ModelParams) and tuple(shape) != (net.arch.height, net.arch.width):
        raise InvalidArgument("sample shape does not match the network")
    f = as_denoiser(net, maps, condition)
    T = sched.T
    x = gaussian(shape, draw.child(0))
    _record(trajectory, T, x)
    for t in range(T, 0, -1):
        if m_prime is not None:
            sample = DiffusionSample(apply_mask(m_prime, forward_A(x, maps)), t, "ambient_ddm", t / T)
        else:
            sample = DiffusionSample(x, t, "ddm", t / T)
        mu1, mu2, var = sched.reverse_coefficients(t)
        x = mu1 * x + mu2 * f(sample)
        if t > 1 and var > 0:
            scale = var if raw_variance else np.sqrt(var)
            x = x + scale * gaussian(shape, draw.child(1, t))
        _record(trajectory, t - 1, x)
    return x


def _bridge_steps(steps):
    grid = time_grid(steps)
    return list(zip(grid[:-1], grid[1:]))


def sample_db(
    net,
    sched: BridgeSchedule,
    y: Measurement,
    steps: int,
    draw: NoiseDraw,
    maps: SensitivityMaps | None = None,
    m_prime: SamplingMask | None = None,
    trajectory: list | None = None,
) -> np.ndarray:
    """Bridge iteration from ``x_1 = A^H y + sigma_1 eps`` to ``x_0``.

    ``m_prime`` switches to Ambient-DB inference: the network sees ``M'A x_t``
    instead of ``x_t``.
    """
    f = as_denoiser(net, maps)
    x = adjoint_A(y, maps)
    x = x + sched.sigma(1.0) * gaussian(x.shape, draw.child(0))
    _record(trajectory, 1.0, x)
    for k, (t, t_next) in enumerate(_bridge_steps(steps)):
        noise_scale = sched.step_noise_scale(t, t_next)
        if m_prime is not None:
            sample = DiffusionSample(apply_mask(m_prime, forward_A(x, maps)), t, "ambient_db", t)
        else:
            sample = DiffusionSample(x, t, "db", t)
        d = (t - t_next) / t
        x_new = d * f(sample) + (1 - d) * x
        if t_next > 0 and noise_scale > 0:
            x_new = x_new + t_next * noise_scale * gaussian(x.shape, draw.child(1, k))
        x = x_new
        _record(trajectory, t_next, x)
    return x


def sample_ambient_db(net, sched: BridgeSchedule, y: Measurement, m_prime: SamplingMask, steps: int, draw: NoiseDraw, maps=None, trajectory=None):
    return sample_db(net, sched, y, steps, draw, maps=maps, m_prime=m_prime, trajectory=trajectory)


def sample_selfdb(
    net,
    sched: BridgeSchedule,
    y: Measurement,
    triple: MaskTriple,
    steps: int,
    draw: NoiseDraw,
    maps: SensitivityMaps | None = None,
    trajectory: list | None = None,
    calls: list | None = None,
) -> np.ndarray:
    """SelfDB inference on a test measurement already sampled with ``M'``.

    Each grid point t = 1, 1-d, ..., 0 evaluates the network once; at t = 0 the
    estimate is returned, otherwise the state moves toward ``M_bar A x_hat``.
    ``trajectory`` collects the per-step estimates x_hat; ``calls`` collects
    the network inputs.
    """
    if y.data.shape[-1] != triple.m_prime.width:
        raise InvalidArgument("measurement width does not match the mask triple")
    if not y.consistent_with(triple.m_prime):
        raise InvalidArgument("test measurement must already be sampled with m_prime")
    f = as_denoiser(net, maps)
    grid = time_grid(steps)
    yt = apply_mask(triple.m_prime, y).data + sched.sigma(1.0) * gaussian(y.shape, draw.child(0))
    for k, t in enumerate(grid):
        eps = gaussian(y.shape, draw.child(1, k))
        sample = DiffusionSample(Measurement(yt), t, "selfdb", t)
        if calls is not None:
            calls.append(sample)
        x_hat = f(sample)
        _record(trajectory, t, x_hat)
        if t == 0:
            return x_hat
        t_next = grid[k + 1]
        y_hat = apply_mask(triple.m_bar, forward_A(x_hat, maps)).data
        d = (t - t_next) / t
        yt = d * y_hat + (1 - d) * yt + t_next * sched.step_noise_scale(t, t_next) * eps
    raise AssertionError("time grid must end at 0")
