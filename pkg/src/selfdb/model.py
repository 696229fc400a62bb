"""Time-conditioned convolutional reconstructor with exact reverse-mode gradients.

The network maps a 2-channel (real, imag) image plus broadcast sinusoidal time
features, and optionally a 2-channel conditioning image, to a 2-channel output.
Hidden layers use leaky-ReLU; the last layer is linear and, by default, added to
the input image (global residual). Everything is plain numpy in float64.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import InvalidArgument
from .operators import Measurement, SensitivityMaps, adjoint_A
from .processes import DiffusionSample
from .tensors import NoiseDraw

__all__ = [
    "Arch",
    "ModelParams",
    "init_params",
    "time_embedding",
    "network_input",
    "apply_network",
    "network_vjp",
    "forward",
    "backward",
    "GradCheckReport",
    "grad_check",
]


@dataclass(frozen=True)
class Arch:
    height: int
    width: int
    hidden: tuple[int, ...] = (32, 32, 32)
    kernel: int = 3
    embed_dims: int = 8
    cond_channels: int = 0
    negative_slope: float = 0.2
    residual: bool = True
    output_gain: float = 1.0  # multiplies the init std of the last layer; 0 starts at the identity map

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.height < 1 or self.width < 1:
            raise InvalidArgument("arch needs positive spatial dims")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise InvalidArgument("kernel size must be odd and positive")
        if any(h < 1 for h in self.hidden):
            raise InvalidArgument("hidden widths must be positive")
        if self.embed_dims < 0 or self.embed_dims % 2:
            raise InvalidArgument("embed_dims must be even and nonnegative")
        if self.cond_channels not in (0, 2):
            raise InvalidArgument("cond_channels must be 0 or 2")

    @property
    def in_channels(self) -> int:
        return 2 + self.embed_dims + self.cond_channels

    def layer_shapes(self) -> list[tuple[int, int]]:
        """``(c_out, c_in)`` per conv layer."""
        widths = (self.in_channels, *self.hidden, 2)
        return list(zip(widths[1:], widths[:-1]))

    @property
    def param_count(self) -> int:
        k2 = self.kernel**2
        return sum(co * ci * k2 + co for co, ci in self.layer_shapes())

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "Arch":
        return cls(**{**d, "hidden": tuple(d.get("hidden", ()))})


@dataclass(frozen=True, eq=False)
class ModelParams:
    arch: Arch
    theta: np.ndarray = field(repr=False)

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=np.float64)
        if theta.shape != (self.arch.param_count,):
            raise InvalidArgument(f"theta has {theta.size} entries, arch needs {self.arch.param_count}")
        if not np.all(np.isfinite(theta)):
            raise InvalidArgument("non-finite parameters")
        object.__setattr__(self, "theta", theta)

    @property
    def param_count(self) -> int:
        return self.theta.size

    def layers(self):
        """Yield ``(W, b)`` views into theta, W shaped ``(c_out, k*k*c_in)``."""
        k2 = self.arch.kernel**2
        off = 0
        for co, ci in self.arch.layer_shapes():
            W = self.theta[off : off + co * ci * k2].reshape(co, ci * k2)
            off += co * ci * k2
            b = self.theta[off : off + co]
            off += co
            yield W, b

    def with_theta(self, theta) -> "ModelParams":
        return ModelParams(self.arch, theta)


def init_params(arch: Arch, draw: NoiseDraw) -> ModelParams:
    """He-normal weights (std sqrt(2 / fan_in)), zero biases.

    The last layer's std is further scaled by ``arch.output_gain``.
    """
    rng = draw.rng()
    k2 = arch.kernel**2
    chunks = []
    shapes = arch.layer_shapes()
    for li, (co, ci) in enumerate(shapes):
        fan_in = ci * k2
        gain = arch.output_gain if li == len(shapes) - 1 else 1.0
        chunks.append(rng.standard_normal(co * ci * k2) * np.sqrt(2.0 / fan_in) * gain)
        chunks.append(np.zeros(co))
    return ModelParams(arch, np.concatenate(chunks))


def time_embedding(tau, dims: int) -> np.ndarray:
    """Features ``sin(pi 2^k tau), cos(pi 2^k tau)`` for k < dims/2; shape ``(len(tau), dims)``."""
    tau = np.atleast_1d(np.asarray(tau, dtype=np.float64))
    freqs = np.pi * 2.0 ** np.arange(dims // 2)
    ang = tau[:, None] * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


def _to_image(state, maps):
    if isinstance(state, Measurement):
        return adjoint_A(state, maps)
    return np.asarray(state, dtype=np.complex128)


def network_input(sample: DiffusionSample, maps: SensitivityMaps | None = None) -> np.ndarray:
    """Image-domain view of a sample; measurement states become zero-filled ``A^H y_t``."""
    return _to_image(sample.state, maps)


def _pad(a, p):
    return np.pad(a, ((0, 0), (p, p), (p, p), (0, 0)))


def _im2col(a, k):
    # a: (B, H, W, C) -> (B*H*W, k*k*C), column order (ky, kx, c)
    B, H, W, C = a.shape
    win = sliding_window_view(_pad(a, k // 2), (k, k), axis=(1, 2))
    return win.transpose(0, 1, 2, 4, 5, 3).reshape(B * H * W, k * k * C)


def _col2im(dcols, shape, k):
    B, H, W, C = shape
    p = k // 2
    d = dcols.reshape(B, H, W, k, k, C)
    out = np.zeros((B, H + 2 * p, W + 2 * p, C))
    for i in range(k):
        for j in range(k):
            out[:, i : i + H, j : j + W, :] += d[:, :, :, i, j, :]
    return out[:, p : p + H, p : p + W, :]


def _assemble(arch: Arch, images, taus, conds):
    images = np.asarray(images)
    B, H, W = images.shape
    if (H, W) != (arch.height, arch.width):
        raise InvalidArgument(f"input {H}x{W} does not match arch {arch.height}x{arch.width}")
    parts = [images.real[..., None], images.imag[..., None]]
    if arch.embed_dims:
        emb = time_embedding(taus, arch.embed_dims)
        parts.append(np.broadcast_to(emb[:, None, None, :], (B, H, W, arch.embed_dims)))
    if arch.cond_channels:
        if conds is None:
            raise InvalidArgument("this network needs a conditioning input")
        conds = np.asarray(conds)
        if conds.shape != images.shape:
            raise InvalidArgument("conditioning image shape mismatch")
        parts += [conds.real[..., None], conds.imag[..., None]]
    elif conds is not None:
        raise InvalidArgument("network has no conditioning channels")
    return np.concatenate(parts, axis=-1)


def apply_network(params: ModelParams, images, taus, conds=None, keep_cache: bool = False):
    """Batched forward pass.

    ``images``: complex ``(B, H, W)`` network inputs, ``taus``: ``(B,)`` times in
    [0, 1], ``conds``: optional complex ``(B, H, W)``. Returns the complex
    output and, when ``keep_cache``, the tape needed by :func:`network_vjp`.
    """
    arch = params.arch
    a = _assemble(arch, images, taus, conds)
    k = arch.kernel
    B, H, W, _ = a.shape
    layers = list(params.layers())
    tape = []
    for li, (Wm, b) in enumerate(layers):
        cols = _im2col(a, k)
        z = (cols @ Wm.T + b).reshape(B, H, W, -1)
        last = li == len(layers) - 1
        if keep_cache:
            tape.append((cols, a.shape, None if last else z > 0))
        a = z if last else np.where(z > 0, z, arch.negative_slope * z)
    out = a[..., 0] + 1j * a[..., 1]
    if arch.residual:
        out = out + images
    return (out, tape) if keep_cache else out


def network_vjp(params: ModelParams, tape, out_grads) -> np.ndarray:
    """Contract ``d(output)/d(theta)`` with complex ``out_grads`` (real part pairs with the real channel)."""
    arch = params.arch
    k = arch.kernel
    g = np.stack([out_grads.real, out_grads.imag], axis=-1)
    layers = list(params.layers())
    grads = []
    for li in range(len(layers) - 1, -1, -1):
        Wm, _ = layers[li]
        cols, in_shape, active = tape[li]
        if active is not None:
            g = np.where(active, g, arch.negative_slope * g)
        gf = g.reshape(-1, g.shape[-1])
        grads.append((gf.T @ cols).ravel())
        grads.append(gf.sum(axis=0))
        if li > 0:
            g = _col2im(gf @ Wm, in_shape, k)
    # collected last layer first, bias after weight; restore theta order
    ordered = []
    for i in range(len(layers) - 1, -1, -1):
        ordered += [grads[2 * i], grads[2 * i + 1]]
    return np.concatenate(ordered)


def _single(params, sample, maps, condition):
    img = network_input(sample, maps)[None]
    cond = None if condition is None else _to_image(condition, maps)[None]
    return img, np.array([sample.tau]), cond


def forward(params: ModelParams, sample: DiffusionSample, maps: SensitivityMaps | None = None, condition=None) -> np.ndarray:
    img, tau, cond = _single(params, sample, maps, condition)
    return apply_network(params, img, tau, cond)[0]


def backward(params: ModelParams, sample: DiffusionSample, output_grad, maps=None, condition=None) -> np.ndarray:
    img, tau, cond = _single(params, sample, maps, condition)
    _, tape = apply_network(params, img, tau, cond, keep_cache=True)
    return network_vjp(params, tape, np.asarray(output_grad)[None])


@dataclass
class GradCheckReport:
    max_rel_err: float
    tolerance: float
    n_checked: int

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tolerance


def grad_check(
    params: ModelParams,
    sample: DiffusionSample,
    tolerance: float,
    n_coords: int = 50,
    h: float = 1e-5,
    draw: NoiseDraw = NoiseDraw(0),
    maps=None,
    condition=None,
) -> GradCheckReport:
    """Central differences on random coordinates of theta for ``L = <Re, Im> . out``.

    Relative error per coordinate is normalized by the largest analytic
    gradient magnitude among the checked coordinates so near-zero entries do
    not dominate.
    """
    rng = draw.rng()
    shape = (params.arch.height, params.arch.width)
    G = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)

    def loss(theta):
        out = forward(params.with_theta(theta), sample, maps, condition)
        return float(np.sum(out.real * G.real + out.imag * G.imag))

    grad = backward(params, sample, G, maps, condition)
    idx = rng.choice(params.param_count, size=min(n_coords, params.param_count), replace=False)
    fd = np.empty(idx.size)
    for n, i in enumerate(idx):
        tp = params.theta.copy()
        tm = params.theta.copy()
        tp[i] += h
        tm[i] -= h
        fd[n] = (loss(tp) - loss(tm)) / (2 * h)
    scale = max(np.max(np.abs(grad[idx])), np.finfo(float).tiny)
    rel = float(np.max(np.abs(fd - grad[idx])) / scale)
    return GradCheckReport(rel, tolerance, int(idx.size))
