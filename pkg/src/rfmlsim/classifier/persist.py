"""Binary parameter files.

Layout (all integers little-endian)::

    magic          8 bytes  b"RFMLMDL1"
    config_len     u32
    config         config_len bytes of UTF-8 JSON {"config": {...}, "meta": {...}}
    tensor_count   u32
    tensor_count x:
        name_len   u16
        name       name_len bytes UTF-8
        rank       u8
        dims       rank x u32
        payload    prod(dims) x IEEE-754 binary32, row-major
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import CorruptFileError, InvalidInputError, ShapeMismatchError, VersionMismatchError
from .network import ModelConfig, ModelParams

MAGIC = b"RFMLMDL1"
_FAMILY = MAGIC[:7]


def save_params(params: ModelParams, path) -> None:
    header = json.dumps({"config": params.config.to_dict(), "meta": params.meta}, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<I", len(header)), header, struct.pack("<I", len(params.tensors))]
    for name in sorted(params.tensors):
        arr = np.ascontiguousarray(params.tensors[name], dtype="<f4")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw + struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    Path(path).write_bytes(b"".join(parts))


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.pos = data, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CorruptFileError("unexpected end of file")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_params(path, expected: ModelConfig | None = None) -> ModelParams:
    """Read a parameter file; raises CorruptFileError, VersionMismatchError or
    ShapeMismatchError on bad content and OSError on I/O failure."""
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        if data[:7] == _FAMILY:
            raise VersionMismatchError(f"unsupported model file version {data[7:8]!r}")
        raise CorruptFileError("not a model file (bad magic)")
    r = _Reader(data)
    r.take(8)
    (hlen,) = r.unpack("<I")
    try:
        header = json.loads(r.take(hlen).decode("utf-8"))
        config = ModelConfig.from_dict(header["config"])
        meta = header.get("meta", {})
    except (ValueError, KeyError, TypeError) as exc:
        raise CorruptFileError(f"unreadable config block: {exc}") from exc

    (count,) = r.unpack("<I")
    tensors = {}
    for _ in range(count):
        (nlen,) = r.unpack("<H")
        name = r.take(nlen).decode("utf-8", errors="replace")
        (rank,) = r.unpack("<B")
        dims = r.unpack(f"<{rank}I") if rank else ()
        size = int(np.prod(dims)) if dims else 1
        payload = r.take(4 * size)
        tensors[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float32)
    if r.pos != len(data):
        raise CorruptFileError(f"{len(data) - r.pos} trailing bytes after last tensor")

    if expected is not None and expected != config:
        raise ShapeMismatchError(f"file config {config} does not match expected {expected}")
    try:
        return ModelParams(config, tensors, meta)
    except InvalidInputError as exc:
        raise ShapeMismatchError(str(exc)) from exc
