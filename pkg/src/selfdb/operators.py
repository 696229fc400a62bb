"""Cartesian measurement model ``y = M F S x + e``.

K-space uses the unshifted orthonormal FFT layout, so the DC column is index 0
and "central" (low-frequency) columns wrap around both ends of the array.
Masks select whole phase-encode columns (the last axis).
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument
from .tensors import NoiseDraw, gaussian

__all__ = [
    "SamplingMask",
    "MaskTriple",
    "SensitivityMaps",
    "Measurement",
    "round_half_up",
    "low_frequency_columns",
    "make_mask",
    "make_nested_triple",
    "apply_mask",
    "fourier",
    "inverse_fourier",
    "synthetic_maps",
    "forward_A",
    "adjoint_A",
    "simulate_measurement",
]


def round_half_up(v: float) -> int:
    # tolerance keeps 0.5-ties computed in floating point on the upper side
    return int(math.floor(v + 0.5 + 1e-9))


@dataclass(frozen=True)
class SamplingMask:
    width: int
    selected: tuple[int, ...]
    rate: float

    def __post_init__(self):
        sel = tuple(sorted(int(c) for c in self.selected))
        if len(set(sel)) != len(sel):
            raise InvalidArgument("duplicate columns in mask")
        if sel and (sel[0] < 0 or sel[-1] >= self.width):
            raise InvalidArgument(f"mask columns must lie in [0, {self.width})")
        if len(sel) != round_half_up(self.rate * self.width):
            raise InvalidArgument(
                f"{len(sel)} selected columns inconsistent with rate {self.rate} on width {self.width}"
            )
        object.__setattr__(self, "selected", sel)

    @classmethod
    def from_flags(cls, flags) -> "SamplingMask":
        flags = np.asarray(flags, dtype=bool)
        return cls(flags.size, tuple(np.flatnonzero(flags)), flags.sum() / flags.size)

    @property
    def flags(self) -> np.ndarray:
        v = np.zeros(self.width, dtype=bool)
        v[list(self.selected)] = True
        return v

    @property
    def ident(self) -> str:
        """Content-derived identifier, recorded in measurements as ``mask_id``."""
        crc = zlib.crc32(self.flags.astype(np.uint8).tobytes())
        return f"w{self.width}-n{len(self.selected)}-{crc:08x}"

    def issubset(self, other: "SamplingMask") -> bool:
        return self.width == other.width and set(self.selected) <= set(other.selected)


@dataclass(frozen=True)
class MaskTriple:
    """Nested masks ``m_prime <= m_bar <= m`` (as column sets)."""

    m: SamplingMask
    m_bar: SamplingMask
    m_prime: SamplingMask

    def __post_init__(self):
        if not (self.m_prime.issubset(self.m_bar) and self.m_bar.issubset(self.m)):
            raise InvalidArgument("mask triple is not nested: need m_prime <= m_bar <= m")

    def __iter__(self):
        return iter((self.m, self.m_bar, self.m_prime))


@dataclass(frozen=True)
class SensitivityMaps:
    maps: np.ndarray  # (coils, height, width), pixelwise unit-normalized

    @property
    def coils(self) -> int:
        return self.maps.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.maps.shape[1:]


@dataclass(frozen=True, eq=False)
class Measurement:
    """Zero-filled k-space of shape ``(coils, height, width)``."""

    data: np.ndarray
    mask_id: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.complex128)
        if data.ndim == 2:
            data = data[None]
        if data.ndim != 3:
            raise InvalidArgument(f"measurement must be (coils, H, W), got shape {data.shape}")
        object.__setattr__(self, "data", data)

    @property
    def shape(self):
        return self.data.shape

    def support(self) -> np.ndarray:
        """Columns holding any nonzero sample."""
        return np.any(self.data != 0, axis=(0, 1))

    def consistent_with(self, mask: SamplingMask) -> bool:
        return not np.any(self.support() & ~mask.flags)


def low_frequency_columns(width: int, n: int) -> np.ndarray:
    """The ``n`` columns nearest DC, in unshifted FFT layout."""
    centered = np.arange(width // 2 - n // 2, width // 2 - n // 2 + n)
    return np.sort((centered - width // 2) % width)


def _check_rate(rate, name="rate"):
    if not (0 < rate <= 1):
        raise InvalidArgument(f"{name} must lie in (0, 1], got {rate}")


def make_mask(width: int, rate: float, center_fraction: float, draw: NoiseDraw) -> SamplingMask:
    _check_rate(rate)
    if width < 1:
        raise InvalidArgument("width must be positive")
    if center_fraction < 0 or center_fraction > rate:
        raise InvalidArgument(f"center_fraction must lie in [0, rate], got {center_fraction}")
    n = round_half_up(rate * width)
    center = low_frequency_columns(width, round_half_up(center_fraction * width))
    rest = np.setdiff1d(np.arange(width), center)
    extra = draw.rng().choice(rest, size=n - center.size, replace=False)
    return SamplingMask(width, tuple(np.concatenate([center, extra])), rate)


def _subsample(parent: SamplingMask, rate: float, center: np.ndarray, rng) -> SamplingMask:
    n = round_half_up(rate * parent.width)
    pool = np.setdiff1d(np.asarray(parent.selected), center)
    if n < center.size or n - center.size > pool.size:
        raise InvalidArgument(f"cannot draw {n} columns at rate {rate} from parent of {len(parent.selected)}")
    extra = rng.choice(pool, size=n - center.size, replace=False)
    return SamplingMask(parent.width, tuple(np.concatenate([center, extra])), rate)


def make_nested_triple(width: int, rates, center_fraction: float, draw: NoiseDraw) -> MaskTriple:
    r1, r2, r3 = (float(r) for r in rates)
    if not (1 >= r1 > r2 > r3 > 0):
        raise InvalidArgument(f"rates must satisfy 1 >= r1 > r2 > r3 > 0, got {tuple(rates)}")
    if center_fraction > r3:
        raise InvalidArgument("center_fraction must not exceed the smallest rate")
    m = make_mask(width, r1, center_fraction, draw.child(0))
    center = low_frequency_columns(width, round_half_up(center_fraction * width))
    m_bar = _subsample(m, r2, center, draw.child(1).rng())
    m_prime = _subsample(m_bar, r3, center, draw.child(2).rng())
    return MaskTriple(m, m_bar, m_prime)


def apply_mask(mask: SamplingMask, y) -> Measurement:
    data = y.data if isinstance(y, Measurement) else y
    data = np.asarray(data)
    if data.shape[-1] != mask.width:
        raise InvalidArgument(f"k-space width {data.shape[-1]} does not match mask width {mask.width}")
    return Measurement(data * mask.flags, mask.ident)


def fourier(x) -> np.ndarray:
    return np.fft.fft2(x, norm="ortho")


def inverse_fourier(k) -> np.ndarray:
    return np.fft.ifft2(k, norm="ortho")


def synthetic_maps(coils: int, height: int, width: int) -> SensitivityMaps:
    """Smooth coil profiles (Gaussian bumps on a ring, linear phase), normalized so sum |s_c|^2 = 1."""
    if coils < 1:
        raise InvalidArgument("need at least one coil")
    if coils == 1:
        return SensitivityMaps(np.ones((1, height, width), dtype=np.complex128))
    yy, xx = np.meshgrid(np.linspace(-1, 1, height), np.linspace(-1, 1, width), indexing="ij")
    maps = []
    for c in range(coils):
        ang = 2 * np.pi * c / coils
        cy, cx = 0.7 * np.sin(ang), 0.7 * np.cos(ang)
        mag = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * 0.6**2))
        phase = np.pi * 0.4 * (np.cos(ang) * xx + np.sin(ang) * yy)
        maps.append(mag * np.exp(1j * phase))
    maps = np.stack(maps)
    maps /= np.sqrt(np.sum(np.abs(maps) ** 2, axis=0, keepdims=True))
    return SensitivityMaps(maps)


def _maps_for(x_shape, s: SensitivityMaps | None) -> np.ndarray:
    if s is None:
        return np.ones((1, *x_shape[-2:]), dtype=np.complex128)
    if tuple(s.shape) != tuple(x_shape[-2:]):
        raise InvalidArgument(f"sensitivity maps {s.shape} do not match image {x_shape[-2:]}")
    return s.maps


def forward_A(x, s: SensitivityMaps | None = None) -> np.ndarray:
    """Per-coil k-space ``F(s_c * x)``; ``s=None`` means a single unit coil."""
    x = np.asarray(x)
    return fourier(_maps_for(x.shape, s) * x)


def adjoint_A(y, s: SensitivityMaps | None = None) -> np.ndarray:
    data = y.data if isinstance(y, Measurement) else np.asarray(y)
    if data.ndim == 2:
        data = data[None]
    maps = _maps_for(data.shape, s)
    if data.shape[0] != maps.shape[0]:
        raise InvalidArgument(f"{data.shape[0]} coils in data, {maps.shape[0]} maps")
    return np.sum(np.conj(maps) * inverse_fourier(data), axis=0)


def simulate_measurement(x, s, mask: SamplingMask, noise_std: float, draw: NoiseDraw | None) -> Measurement:
    if noise_std < 0:
        raise InvalidArgument("noise_std must be nonnegative")
    k = forward_A(x, s)
    if noise_std > 0:
        k = k + noise_std * gaussian(k.shape, draw)
    return apply_mask(mask, k)
