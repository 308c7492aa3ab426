"""Binary checkpoint format.

Layout (little-endian)::

    b"SRPC"  u32 version=1  u32 tensor_count
    per tensor: u16 name_len, name (utf-8), u8 dtype (0=f32, 1=f64), u8 rank,
                rank * u32 dims, payload
    u64 seed, u32 text_len, config snapshot (utf-8 key = value text)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"SRPC"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


class CheckpointError(IOError):
    pass


@dataclass
class Checkpoint:
    tensors: dict[str, np.ndarray] = field(default_factory=dict)
    seed: int = 0
    config_text: str = ""

    def to_bytes(self) -> bytes:
        out = [MAGIC, struct.pack("<II", VERSION, len(self.tensors))]
        for name, arr in self.tensors.items():
            arr = np.asarray(arr)
            if arr.dtype not in _CODES:
                raise CheckpointError(f"{name}: unsupported dtype {arr.dtype}")
            raw = name.encode()
            out.append(struct.pack("<H", len(raw)) + raw)
            out.append(struct.pack("<BB", _CODES[arr.dtype], arr.ndim))
            out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
            out.append(np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<")).tobytes())
        text = self.config_text.encode()
        out.append(struct.pack("<QI", self.seed, len(text)) + text)
        return b"".join(out)

    @classmethod
    def from_bytes(cls, buf: bytes) -> "Checkpoint":
        if buf[:4] != MAGIC:
            raise CheckpointError(f"bad magic {buf[:4]!r}, expected {MAGIC!r}")
        try:
            version, count = struct.unpack_from("<II", buf, 4)
            if version != VERSION:
                raise CheckpointError(f"unsupported checkpoint version {version}")
            pos = 12
            tensors = {}
            for _ in range(count):
                (nlen,) = struct.unpack_from("<H", buf, pos)
                pos += 2
                name = buf[pos:pos + nlen].decode()
                pos += nlen
                code, rank = struct.unpack_from("<BB", buf, pos)
                pos += 2
                dims = struct.unpack_from(f"<{rank}I", buf, pos)
                pos += 4 * rank
                dt = _DTYPES[code]
                size = int(np.prod(dims, dtype=np.int64)) * dt.itemsize
                if pos + size > len(buf):
                    raise CheckpointError(f"{name}: payload truncated")
                tensors[name] = np.frombuffer(buf, dtype=dt, count=size // dt.itemsize, offset=pos).reshape(dims).copy()
                pos += size
            seed, tlen = struct.unpack_from("<QI", buf, pos)
            pos += 12
            text = buf[pos:pos + tlen]
            if len(text) != tlen:
                raise CheckpointError("config snapshot truncated")
        except (struct.error, KeyError, UnicodeDecodeError) as exc:
            raise CheckpointError(f"corrupt checkpoint: {exc}") from exc
        return cls(tensors, seed, text.decode())

    def save(self, path: str) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path: str) -> "Checkpoint":
        try:
            with open(path, "rb") as fh:
                return cls.from_bytes(fh.read())
        except OSError as exc:
            if isinstance(exc, CheckpointError):
                raise
            raise CheckpointError(f"cannot read {path}: {exc}") from exc
