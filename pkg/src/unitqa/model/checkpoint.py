"""Versioned binary checkpoint container.

Layout, all integers little-endian::

    b"UQCK" | u32 version | u32 n | n bytes JSON {"config", "meta"}
    | u32 m | m bytes ASCII vocabulary hash (m may be 0)
    | u32 tensor count | per tensor: u16 name length, UTF-8 name, u8 ndim,
      ndim x u32 dims, float32 data
    | u32 CRC32 of everything before it

Tensors are written in sorted name order so equal models give equal bytes.
"""

from __future__ import annotations

import io
import json
import os
import struct
import zlib
from pathlib import Path

import numpy as np

from ..errors import ChecksumError, FormatVersionError, InvalidStateError
from .config import ModelConfig
from .transformer import Seq2SeqModel

MAGIC = b"UQCK"
FORMAT_VERSION = 1
_U32 = struct.Struct("<I")
_U16 = struct.Struct("<H")


def _blob(b: bytes) -> bytes:
    return _U32.pack(len(b)) + b


def checkpoint_bytes(model: Seq2SeqModel, vocab_hash: str | None = None) -> bytes:
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(_U32.pack(FORMAT_VERSION))
    header = {"config": model.config.to_dict(), "meta": model.meta}
    out.write(_blob(json.dumps(header, sort_keys=True).encode()))
    out.write(_blob((vocab_hash or "").encode("ascii")))
    out.write(_U32.pack(len(model.params)))
    for name in sorted(model.params):
        value = np.ascontiguousarray(model.params[name], dtype="<f4")
        raw = name.encode()
        out.write(_U16.pack(len(raw)) + raw)
        out.write(bytes([value.ndim]))
        out.write(b"".join(_U32.pack(n) for n in value.shape))
        out.write(value.tobytes())
    body = out.getvalue()
    return body + _U32.pack(zlib.crc32(body))


def save_checkpoint(model: Seq2SeqModel, path, vocab_hash: str | None = None) -> Path:
    """Write atomically (temp file then rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(checkpoint_bytes(model, vocab_hash))
    os.replace(tmp, path)
    return path


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ChecksumError("checkpoint truncated")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]


def parse_checkpoint(data: bytes) -> tuple[Seq2SeqModel, str | None]:
    if len(data) < 12:
        raise ChecksumError("checkpoint is empty or truncated")
    body, crc = data[:-4], _U32.unpack(data[-4:])[0]
    if zlib.crc32(body) != crc:
        raise ChecksumError("checkpoint CRC32 mismatch")
    r = _Reader(body)
    if r.take(4) != MAGIC:
        raise ChecksumError("not a checkpoint (bad magic)")
    version = r.u32()
    if version != FORMAT_VERSION:
        raise FormatVersionError(f"checkpoint format version {version}, expected {FORMAT_VERSION}")
    header = json.loads(r.take(r.u32()).decode())
    config = ModelConfig.from_dict(header["config"])
    vocab_hash = r.take(r.u32()).decode("ascii") or None
    params = {}
    for _ in range(r.u32()):
        name = r.take(_U16.unpack(r.take(2))[0]).decode()
        ndim = r.take(1)[0]
        shape = tuple(r.u32() for _ in range(ndim))
        count = int(np.prod(shape, dtype=np.int64))
        params[name] = np.frombuffer(r.take(4 * count), dtype="<f4").reshape(shape).astype(np.float32)
    if r.pos != len(body):
        raise ChecksumError("trailing bytes after tensors")
    return Seq2SeqModel(config, params, header.get("meta")), vocab_hash


def read_checkpoint(path) -> tuple[Seq2SeqModel, str | None]:
    """Model plus the vocabulary hash it was saved with."""
    return parse_checkpoint(Path(path).read_bytes())


def load_checkpoint(path, expected_vocab_hash: str | None = None) -> Seq2SeqModel:
    model, vocab_hash = read_checkpoint(path)
    if expected_vocab_hash is not None and vocab_hash != expected_vocab_hash:
        raise InvalidStateError("checkpoint was trained with a different vocabulary")
    return model
