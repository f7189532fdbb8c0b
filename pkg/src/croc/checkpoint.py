"""Binary checkpoint format for named parameter arrays.

Layout: magic ``CRCK``, u16 version, u32 block count, then per parameter:
u32 name length, utf-8 name, u8 ndim, u64 per dimension, float64
little-endian values in row-major order.
"""

from __future__ import annotations

import struct

import numpy as np

from .autodiff import Parameter
from .errors import DataError

MAGIC = b"CRCK"
VERSION = 1


def save_checkpoint(path, params: list[Parameter]) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HI", VERSION, len(params)))
        for p in params:
            name = p.name.encode("utf-8")
            fh.write(struct.pack("<I", len(name)))
            fh.write(name)
            fh.write(struct.pack("<B", p.value.ndim))
            for dim in p.value.shape:
                fh.write(struct.pack("<Q", dim))
            fh.write(np.ascontiguousarray(p.value, dtype="<f8").tobytes())


def load_checkpoint(path) -> dict[str, np.ndarray]:
    """Read a checkpoint back into a name -> array mapping, preserving order."""
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise DataError(f"{path}: not a checkpoint file (bad magic)")
        version, count = struct.unpack("<HI", fh.read(6))
        if version != VERSION:
            raise DataError(f"{path}: unsupported checkpoint version {version}")
        out: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<I", fh.read(4))
            name = fh.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<B", fh.read(1))
            shape = tuple(struct.unpack("<Q", fh.read(8))[0] for _ in range(ndim))
            n = int(np.prod(shape)) if shape else 1
            raw = fh.read(8 * n)
            if len(raw) != 8 * n:
                raise DataError(f"{path}: truncated checkpoint block for {name!r}")
            out[name] = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
        return out


def restore_into(params: list[Parameter], state: dict[str, np.ndarray]) -> None:
    """Copy checkpoint arrays into matching parameters; names and shapes must agree."""
    for p in params:
        if p.name not in state:
            raise DataError(f"checkpoint is missing parameter {p.name!r}")
        arr = state[p.name]
        if arr.shape != p.value.shape:
            raise DataError(
                f"checkpoint shape mismatch for {p.name!r}: "
                f"{arr.shape} vs {p.value.shape}"
            )
        p.value[...] = arr
