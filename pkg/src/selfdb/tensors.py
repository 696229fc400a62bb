"""Complex image helpers and the seeded noise source.

Images are plain ``complex128`` numpy arrays of shape ``(height, width)``;
k-space stacks carry a leading coil axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument

__all__ = ["NoiseDraw", "gaussian", "l2_norm", "axpy", "as_image", "zeros"]


@dataclass(frozen=True)
class NoiseDraw:
    """Address of one reproducible noise draw.

    ``(seed, stream)`` selects an independent Philox stream; ``path`` lets a
    caller derive further sub-streams without coordinating integer offsets.
    """

    seed: int
    stream: int = 0
    path: tuple[int, ...] = ()

    def rng(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream, *self.path))
        return np.random.Generator(np.random.Philox(ss))

    def child(self, *keys: int) -> "NoiseDraw":
        return NoiseDraw(self.seed, self.stream, self.path + tuple(int(k) for k in keys))


def gaussian(shape, draw: NoiseDraw) -> np.ndarray:
    """Complex standard normal noise with ``E|eps_i|^2 = 1``."""
    shape = tuple(int(s) for s in np.atleast_1d(shape))
    if len(shape) == 0 or any(s <= 0 for s in shape):
        raise InvalidArgument(f"noise shape must be non-empty, got {shape}")
    z = draw.rng().standard_normal((2, *shape))
    return (z[0] + 1j * z[1]) * np.sqrt(0.5)


def as_image(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.complex128)
    if not np.all(np.isfinite(a)):
        raise InvalidArgument("image contains non-finite values")
    return a


def zeros(shape) -> np.ndarray:
    return np.zeros(shape, dtype=np.complex128)


def l2_norm(a) -> float:
    a = np.asarray(a)
    return float(np.sqrt(np.sum(a.real**2 + a.imag**2)))


def axpy(alpha, a, b) -> np.ndarray:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise InvalidArgument(f"shape mismatch: {a.shape} vs {b.shape}")
    return alpha * a + b
