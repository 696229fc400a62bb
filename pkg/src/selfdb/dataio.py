"""Synthetic phantoms and the binary file formats.

All integers are little-endian. Layouts::

    SDBD dataset      magic, u32 version=1, u32 count, u32 height, u32 width, u32 flags,
                      [count f64 t-values if flags bit 1], values, u32 crc32
    SDBM mask         magic, u32 version=1, u32 width, u32 count(=width), count u8 flags
    SDBC checkpoint   magic, u32 version=1, u32 len, len bytes JSON, u64 n, n f64, u32 crc32
    SDBY measurements magic, u32 version=1, u32 count, u32 coils, u32 height, u32 width,
                      u32 len, len bytes UTF-8 mask file name, values, u32 crc32

Values are interleaved (re, im) f64 pairs when flags bit 0 is set, plain f64
otherwise. A CRC covers everything between the header and the CRC itself.
"""

from __future__ import annotations

import json
import os
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BadMagicError, ChecksumError, DanglingReferenceError, FormatError, InvalidArgument, TruncationError, VersionError
from .model import Arch, ModelParams
from .operators import MaskTriple, Measurement, SamplingMask
from .tensors import NoiseDraw

__all__ = [
    "PhantomSpec",
    "Dataset",
    "gen_phantom",
    "gen_dataset",
    "write_dataset",
    "read_dataset",
    "write_mask",
    "read_mask",
    "write_triple",
    "read_triple",
    "write_checkpoint",
    "read_checkpoint",
    "write_measurements",
    "read_measurements",
    "file_crc",
]

VERSION = 1
FLAG_COMPLEX = 1
FLAG_TVALUES = 2


@dataclass(frozen=True)
class PhantomSpec:
    size: int = 64
    n_ellipses: int = 12
    intensity_range: tuple[float, float] = (0.2, 0.5)
    phase_amplitude: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.size < 16:
            raise InvalidArgument("phantom size must be >= 16")
        if self.n_ellipses < 1:
            raise InvalidArgument("need at least one ellipse")
        lo, hi = self.intensity_range
        if not (0 < lo <= hi):
            raise InvalidArgument("intensity range must satisfy 0 < lo <= hi")


@dataclass(eq=False)
class Dataset:
    images: np.ndarray  # (count, H, W) complex
    meta: dict = field(default_factory=dict)
    t_values: list[float] | None = None

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.complex128)
        if self.images.ndim != 3:
            raise InvalidArgument("dataset images must be (count, H, W)")

    def __len__(self):
        return len(self.images)

    def __eq__(self, other):
        return (
            isinstance(other, Dataset)
            and self.images.shape == other.images.shape
            and np.array_equal(self.images, other.images)
            and self.t_values == other.t_values
        )


def _ellipse(xx, yy, cy, cx, ay, ax, th):
    u = (xx - cx) * np.cos(th) + (yy - cy) * np.sin(th)
    v = -(xx - cx) * np.sin(th) + (yy - cy) * np.cos(th)
    return (u / ax) ** 2 + (v / ay) ** 2


def gen_phantom(spec: PhantomSpec, index: int) -> np.ndarray:
    """Head-like phantom: bright rim, tissue level drawn from ``intensity_range``,
    ``n_ellipses`` inner structures, smooth phase bounded by ``phase_amplitude``.
    Normalized to max magnitude 1.
    """
    rng = NoiseDraw(spec.seed, stream=index).rng()
    n = spec.size
    yy, xx = np.meshgrid(np.linspace(-1, 1, n), np.linspace(-1, 1, n), indexing="ij")
    mag = np.zeros((n, n))
    cy, cx = rng.uniform(-0.1, 0.1, 2)
    ay, ax = rng.uniform(0.65, 0.85, 2)
    head = _ellipse(xx, yy, cy, cx, ay, ax, rng.uniform(0, np.pi))
    mag[head <= 1] = 1.0
    brain = head <= 0.8
    mag[brain] = rng.uniform(*spec.intensity_range)
    for _ in range(spec.n_ellipses):
        cy, cx = rng.uniform(-0.5, 0.5, 2)
        ay, ax = rng.uniform(0.04, 0.25, 2)
        inside = (_ellipse(xx, yy, cy, cx, ay, ax, rng.uniform(0, np.pi)) <= 1) & brain
        mag[inside] += rng.uniform(-0.3, 0.6)
    mag = np.clip(mag, 0, None)
    # |c0| + |c1| + |c2| + |c3| <= 1 keeps |phase| <= amplitude on [-1, 1]^2
    c = rng.uniform(-1, 1, 4)
    c /= np.sum(np.abs(c))
    phase = spec.phase_amplitude * (c[0] + c[1] * xx + c[2] * yy + c[3] * xx * yy)
    img = mag * np.exp(1j * phase) if spec.phase_amplitude else mag.astype(np.complex128)
    return img / np.max(np.abs(img))


def gen_dataset(spec: PhantomSpec, count: int, start: int = 0) -> Dataset:
    images = np.stack([gen_phantom(spec, start + i) for i in range(count)])
    meta = {"size": spec.size, "n_ellipses": spec.n_ellipses, "intensity_range": list(spec.intensity_range),
            "phase_amplitude": spec.phase_amplitude, "seed": spec.seed, "start": start}
    return Dataset(images, meta)


class _Reader:
    def __init__(self, buf: bytes, magic: bytes):
        self.buf = buf
        self.pos = 0
        head = self.take(4)
        if head != magic:
            raise BadMagicError(f"bad magic {head!r}, expected {magic!r}", 0)
        version = self.u32()
        if version != VERSION:
            raise VersionError(f"unsupported version {version}", 4)

    def need(self, n):
        if self.pos + n > len(self.buf):
            raise TruncationError(self.pos + n, len(self.buf))

    def take(self, n) -> bytes:
        self.need(n)
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def f64s(self, n) -> np.ndarray:
        return np.frombuffer(self.take(8 * n), dtype="<f8").astype(np.float64)

    def verify_crc(self, start: int):
        payload = self.buf[start : self.pos]
        stored = self.u32()
        computed = zlib.crc32(payload)
        if stored != computed:
            raise ChecksumError(stored, computed, self.pos - 4)
        if self.pos != len(self.buf):
            raise FormatError(f"{len(self.buf) - self.pos} trailing bytes", self.pos)


def _complex_bytes(a: np.ndarray) -> bytes:
    return np.ascontiguousarray(a, dtype=np.complex128).view(np.float64).astype("<f8").tobytes()


def _write(path, parts):
    path = Path(path)
    data = b"".join(parts)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)
    return zlib.crc32(data)


def file_crc(path) -> int:
    return zlib.crc32(Path(path).read_bytes())


def write_dataset(ds: Dataset, path) -> int:
    """Write an SDBD file; returns the CRC-32 of the whole file."""
    count, h, w = ds.images.shape
    flags = FLAG_COMPLEX | (FLAG_TVALUES if ds.t_values is not None else 0)
    payload = b""
    if ds.t_values is not None:
        if len(ds.t_values) != count:
            raise InvalidArgument("need one t-value per stored image")
        payload += np.asarray(ds.t_values, dtype="<f8").tobytes()
    payload += _complex_bytes(ds.images)
    header = b"SDBD" + struct.pack("<5I", VERSION, count, h, w, flags)
    return _write(path, [header, payload, struct.pack("<I", zlib.crc32(payload))])


def read_dataset(path) -> Dataset:
    r = _Reader(Path(path).read_bytes(), b"SDBD")
    count, h, w, flags = (r.u32() for _ in range(4))
    start = r.pos
    t_values = r.f64s(count).tolist() if flags & FLAG_TVALUES else None
    n = count * h * w
    if flags & FLAG_COMPLEX:
        r.need(16 * n + 4)
        v = r.f64s(2 * n)
        images = v.view(np.complex128).reshape(count, h, w)
    else:
        r.need(8 * n + 4)
        images = r.f64s(n).reshape(count, h, w).astype(np.complex128)
    r.verify_crc(start)
    return Dataset(images, {}, t_values)


def write_mask(mask: SamplingMask, path) -> int:
    flags = mask.flags.astype(np.uint8).tobytes()
    return _write(path, [b"SDBM", struct.pack("<3I", VERSION, mask.width, mask.width), flags])


def read_mask(path) -> SamplingMask:
    r = _Reader(Path(path).read_bytes(), b"SDBM")
    width, count = r.u32(), r.u32()
    if count != width:
        raise FormatError(f"flag count {count} differs from width {width}", 12)
    flags = np.frombuffer(r.take(count), dtype=np.uint8)
    if np.any(flags > 1):
        raise FormatError("mask flags must be 0 or 1", 16 + int(np.argmax(flags > 1)))
    if r.pos != len(r.buf):
        raise FormatError(f"{len(r.buf) - r.pos} trailing bytes", r.pos)
    return SamplingMask.from_flags(flags.astype(bool))


TRIPLE_NAMES = ("m.sdbm", "m_bar.sdbm", "m_prime.sdbm")


def write_triple(triple: MaskTriple, out_dir, rates=None) -> Path:
    """Three SDBM files plus ``manifest.json``; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for name, mask in zip(TRIPLE_NAMES, triple):
        write_mask(mask, out_dir / name)
        entries.append({"file": name, "rate": mask.rate, "selected": len(mask.selected), "ident": mask.ident})
    manifest = {"width": triple.m.width, "masks": entries}
    if rates is not None:
        manifest["rates"] = [float(r) for r in rates]
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def read_triple(mask_dir) -> MaskTriple:
    """Load and re-verify nesting (``MaskTriple`` raises if it does not hold)."""
    mask_dir = Path(mask_dir)
    manifest = json.loads((mask_dir / "manifest.json").read_text())
    masks = []
    for entry in manifest["masks"]:
        m = read_mask(mask_dir / entry["file"])
        masks.append(SamplingMask(m.width, m.selected, entry["rate"]))
    return MaskTriple(*masks)


def write_checkpoint(params: ModelParams, path, meta: dict | None = None) -> int:
    """SDBC file. The JSON blob holds the arch and any run metadata (process kind, schedules)."""
    blob = json.dumps({"arch": json.loads(params.arch.to_json()), "meta": meta or {}}, sort_keys=True).encode()
    payload = params.theta.astype("<f8").tobytes()
    return _write(
        path,
        [b"SDBC", struct.pack("<2I", VERSION, len(blob)), blob, struct.pack("<Q", params.param_count), payload,
         struct.pack("<I", zlib.crc32(payload))],
    )


def read_checkpoint(path) -> tuple[ModelParams, dict]:
    r = _Reader(Path(path).read_bytes(), b"SDBC")
    blob_len = r.u32()
    try:
        blob = json.loads(r.take(blob_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"unreadable arch descriptor: {exc}", 12) from exc
    n = r.u64()
    arch = Arch.from_dict(blob["arch"])
    if n != arch.param_count:
        raise FormatError(f"param_count {n} does not match arch ({arch.param_count})", 12 + blob_len)
    start = r.pos
    r.need(8 * n + 4)
    theta = r.f64s(n)
    r.verify_crc(start)
    return ModelParams(arch, theta), blob.get("meta", {})


def write_measurements(data: np.ndarray, mask_file: str, path) -> int:
    """Store a ``(count, coils, H, W)`` zero-filled k-space stack referring to ``mask_file``.

    ``mask_file`` is resolved relative to the measurement file's directory on read.
    """
    data = np.asarray(data)
    if data.ndim != 4:
        raise InvalidArgument("measurement stack must be (count, coils, H, W)")
    name = str(mask_file).encode()
    payload = _complex_bytes(data)
    return _write(
        path,
        [b"SDBY", struct.pack("<6I", VERSION, *data.shape, len(name)), name, payload,
         struct.pack("<I", zlib.crc32(payload))],
    )


def read_measurements(path) -> tuple[list[Measurement], SamplingMask, str]:
    """Returns ``(measurements, mask, mask_file)``; each measurement is checked against the mask."""
    path = Path(path)
    r = _Reader(path.read_bytes(), b"SDBY")
    count, coils, h, w, name_len = (r.u32() for _ in range(5))
    mask_file = r.take(name_len).decode("utf-8")
    start = r.pos
    n = count * coils * h * w
    r.need(16 * n + 4)
    v = r.f64s(2 * n)
    r.verify_crc(start)
    mask_path = path.parent / mask_file
    if not mask_path.is_file():
        raise DanglingReferenceError(f"measurement file {path} refers to missing mask {mask_path}")
    mask = read_mask(mask_path)
    stack = v.view(np.complex128).reshape(count, coils, h, w)
    out = []
    for k in range(count):
        meas = Measurement(stack[k], mask.ident)
        if not meas.consistent_with(mask):
            raise FormatError(f"measurement {k} has samples outside mask {mask_file}")
        out.append(meas)
    return out, mask, mask_file
