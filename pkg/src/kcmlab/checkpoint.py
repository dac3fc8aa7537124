"""Binary checkpoint format.

Layout, all integers little-endian::

    magic      8 bytes  b"KCMCKPT1"
    version    u32      1
    layers     u32      L + 1
    per layer: out u32, in u32, out*in f64 weights (row-major), out f64 bias
    seeds      u32 count, then count x u64 (init, shuffle, mixup, kernel, eval)
    norm flag  u8       1 if a normalisation record follows
    [dim u32, dim f64 means, dim f64 scales]

Files are written to a temporary sibling and renamed into place.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Normalization
from .errors import FormatError
from .models import MlpParams
from .training import SeedBundle

MAGIC = b"KCMCKPT1"
VERSION = 1


@dataclass
class Checkpoint:
    params: MlpParams
    seeds: SeedBundle
    normalization: Normalization | None = None


def atomic_write(path: str | os.PathLike, payload: bytes | str) -> Path:
    """Exclusive-create a temp file next to ``path``, then rename over it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = payload.encode("utf-8") if isinstance(payload, str) else payload
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    with open(tmp, "xb") as fh:
        fh.write(data)
    os.replace(tmp, path)
    return path


def encode(ckpt: Checkpoint) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(ckpt.params.weights))]
    for w, b in zip(ckpt.params.weights, ckpt.params.biases):
        out_dim, in_dim = w.shape
        parts.append(struct.pack("<II", out_dim, in_dim))
        parts.append(np.ascontiguousarray(w.data, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(b.data, dtype="<f8").tobytes())
    seeds = ckpt.seeds.as_tuple()
    parts.append(struct.pack(f"<I{len(seeds)}Q", len(seeds), *seeds))
    norm = ckpt.normalization
    if norm is None:
        parts.append(b"\x00")
    else:
        parts.append(b"\x01" + struct.pack("<I", len(norm.mean)))
        parts.append(np.asarray(norm.mean, dtype="<f8").tobytes())
        parts.append(np.asarray(norm.scale, dtype="<f8").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, raw: bytes, source: str):
        self.raw, self.pos, self.source = raw, 0, source

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.raw):
            raise FormatError(f"{self.source}: truncated while reading {what} at offset {self.pos}")
        chunk = self.raw[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def f64(self, count: int, what: str) -> np.ndarray:
        return np.frombuffer(self.take(8 * count, what), dtype="<f8").astype(np.float64)


def decode(raw: bytes, source: str = "<bytes>") -> Checkpoint:
    r = _Reader(raw, source)
    if r.take(len(MAGIC), "magic") != MAGIC:
        raise FormatError(f"{source}: bad magic, not a checkpoint")
    version = r.u32("version")
    if version != VERSION:
        raise FormatError(f"{source}: unsupported checkpoint version {version}")
    n_layers = r.u32("layer count")
    if n_layers < 1 or n_layers > 1024:
        raise FormatError(f"{source}: implausible layer count {n_layers}")
    weights, biases = [], []
    for s in range(n_layers):
        out_dim, in_dim = r.u32(f"layer {s} dims"), r.u32(f"layer {s} dims")
        weights.append(r.f64(out_dim * in_dim, f"layer {s} weights").reshape(out_dim, in_dim))
        biases.append(r.f64(out_dim, f"layer {s} bias"))
    count = r.u32("seed count")
    seeds = struct.unpack(f"<{count}Q", r.take(8 * count, "seeds"))
    if count != 5:
        raise FormatError(f"{source}: expected 5 seeds, found {count}")
    flag = r.take(1, "normalization flag")
    norm = None
    if flag == b"\x01":
        dim = r.u32("normalization dim")
        norm = Normalization(r.f64(dim, "normalization mean"), r.f64(dim, "normalization scale"))
    elif flag != b"\x00":
        raise FormatError(f"{source}: bad normalization flag {flag!r}")
    if r.pos != len(raw):
        raise FormatError(f"{source}: {len(raw) - r.pos} trailing bytes after checkpoint")
    try:
        params = MlpParams.from_arrays(weights, biases)
    except ValueError as exc:
        raise FormatError(f"{source}: inconsistent layers ({exc})") from None
    return Checkpoint(params, SeedBundle(*seeds), norm)


def checkpoint_save(ckpt: Checkpoint, path: str | os.PathLike) -> Path:
    return atomic_write(path, encode(ckpt))


def checkpoint_load(path: str | os.PathLike) -> Checkpoint:
    return decode(Path(path).read_bytes(), str(path))
