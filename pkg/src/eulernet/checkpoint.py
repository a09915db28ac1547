"""Versioned binary checkpoints.

Layout::

    b"EULCKPT1" | uint64 LE header length | UTF-8 JSON header | payloads

The header lists every tensor's name, shape, dtype, byte offset (relative
to the payload start), byte length and CRC32. Payloads are raw
little-endian arrays in header order.
"""

from __future__ import annotations

import json
import os
import struct
import zlib
from dataclasses import dataclass, field
from typing import Any

import numpy as np

MAGIC = b"EULCKPT1"
FORMAT_VERSION = 1
_LEN = struct.Struct("<Q")


class CheckpointError(ValueError):
    """Base class for unreadable checkpoints."""


class BadMagicError(CheckpointError):
    pass


class VersionMismatchError(CheckpointError):
    pass


class TruncatedCheckpointError(CheckpointError):
    pass


class IntegrityError(CheckpointError):
    """A payload does not match the CRC32 recorded in the header."""


@dataclass
class Checkpoint:
    tensors: dict[str, np.ndarray]
    config: dict[str, Any] = field(default_factory=dict)
    step: int = 0
    format_version: int = FORMAT_VERSION

    def parameters(self) -> dict[str, np.ndarray]:
        return {k: v for k, v in self.tensors.items() if not k.startswith("optim.")}


def _le(a: np.ndarray) -> np.ndarray:
    a = np.require(a, requirements="C")
    return a.astype(a.dtype.newbyteorder("<"), copy=False)


def save_checkpoint(path: str | os.PathLike, ckpt: Checkpoint) -> None:
    entries, blobs, offset = [], [], 0
    for name, arr in ckpt.tensors.items():
        arr = _le(np.asarray(arr))
        if arr.dtype.kind not in "fiu":
            raise TypeError(f"{name}: cannot store dtype {arr.dtype}")
        raw = arr.tobytes()
        entries.append({
            "name": name,
            "shape": list(arr.shape),
            "dtype": arr.dtype.str,
            "offset": offset,
            "nbytes": len(raw),
            "crc32": zlib.crc32(raw),
        })
        blobs.append(raw)
        offset += len(raw)
    header = {
        "format_version": ckpt.format_version,
        "step": int(ckpt.step),
        "config": ckpt.config,
        "tensors": entries,
    }
    head = json.dumps(header, sort_keys=True, ensure_ascii=False).encode("utf-8")
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_LEN.pack(len(head)))
        fh.write(head)
        for raw in blobs:
            fh.write(raw)
    os.replace(tmp, path)


def load_checkpoint(path: str | os.PathLike) -> Checkpoint:
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:len(MAGIC)] != MAGIC:
        raise BadMagicError(f"{path}: not a checkpoint (magic {buf[:len(MAGIC)]!r})")
    pos = len(MAGIC)
    if len(buf) < pos + _LEN.size:
        raise TruncatedCheckpointError(f"{path}: truncated before header length")
    (hlen,) = _LEN.unpack_from(buf, pos)
    pos += _LEN.size
    if len(buf) < pos + hlen:
        raise TruncatedCheckpointError(f"{path}: truncated inside header")
    try:
        header = json.loads(buf[pos:pos + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header: {exc}") from None
    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"{path}: format version {version}, this build reads {FORMAT_VERSION}")
    base = pos + hlen
    tensors = {}
    for e in header["tensors"]:
        start = base + e["offset"]
        raw = buf[start:start + e["nbytes"]]
        if len(raw) != e["nbytes"]:
            raise TruncatedCheckpointError(f"{path}: payload of {e['name']} is truncated")
        if zlib.crc32(raw) != e["crc32"]:
            raise IntegrityError(f"{path}: CRC mismatch in payload of {e['name']}")
        dt = np.dtype(e["dtype"])
        tensors[e["name"]] = np.frombuffer(raw, dtype=dt).reshape(e["shape"]).astype(dt.newbyteorder("="))
    return Checkpoint(tensors, header.get("config", {}), header.get("step", 0), version)
