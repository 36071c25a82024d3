"""Named-parameter serialization: flat little-endian binary streams.

Layout: magic ``NHPT``, version u32, entry count u32, then per entry
name length u16 + UTF-8 name, rank u8, one u32 extent per axis,
precision u8 (4 or 8 bytes per scalar), raw data.
"""

from __future__ import annotations

import struct
from collections import OrderedDict

import numpy as np

from .autodiff import Tensor

MAGIC = b"NHPT"
VERSION = 1


class CheckpointError(IOError):
    pass


def write_tensors(path, tensors: "OrderedDict[str, Tensor]"):
    """Write named tensors in declaration order (deterministic bytes)."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(tensors)))
        for name, t in tensors.items():
            raw = name.encode("utf-8")
            if len(raw) > 0xFFFF:
                raise CheckpointError(f"parameter name too long: {name[:40]}...")
            arr = t.data if t.data.flags.c_contiguous else np.ascontiguousarray(t.data)
            prec = arr.dtype.itemsize
            if prec not in (4, 8):
                raise CheckpointError(f"unsupported precision {prec} for {name}")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", arr.ndim))
            for ext in arr.shape:
                fh.write(struct.pack("<I", ext))
            fh.write(struct.pack("<B", prec))
            fh.write(arr.astype(f"<f{prec}", copy=False).tobytes())


def read_tensors(path) -> "OrderedDict[str, Tensor]":
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {blob[:4]!r}, expected {MAGIC!r}")
    version, count = struct.unpack_from("<II", blob, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    off = 12
    out: OrderedDict[str, Tensor] = OrderedDict()
    try:
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", blob, off)
            off += 2
            name = blob[off:off + nlen].decode("utf-8")
            off += nlen
            (rank,) = struct.unpack_from("<B", blob, off)
            off += 1
            shape = struct.unpack_from(f"<{rank}I", blob, off)
            off += 4 * rank
            (prec,) = struct.unpack_from("<B", blob, off)
            off += 1
            if prec not in (4, 8):
                raise CheckpointError(f"{path}: entry {name} has precision {prec}")
            n = int(np.prod(shape, dtype=np.int64)) if rank else 1
            nbytes = n * prec
            data = np.frombuffer(blob, dtype=f"<f{prec}", count=n, offset=off).reshape(shape)
            off += nbytes
            out[name] = Tensor(data.copy())
    except (struct.error, ValueError, UnicodeDecodeError) as e:
        raise CheckpointError(f"{path}: truncated or corrupt stream ({e})") from e
    if off != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - off} trailing bytes")
    return out
