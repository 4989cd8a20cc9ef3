"""MCKP named-tensor archives.

Layout: ``b"MCKP"``, u32 version, u32 record count, then per record a u16
name length, the UTF-8 name and an embedded MCTN tensor. A trailing
metadata block follows: ``b"META"``, u16 hash length, UTF-8 config hash,
u64 global step.
"""

from __future__ import annotations

import hashlib
import io
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .tensorio import FormatError, encode_tensor, read_tensor

MAGIC = b"MCKP"
META = b"META"
VERSION = 1


@dataclass
class Checkpoint:
    tensors: dict[str, np.ndarray] = field(default_factory=dict)
    config_hash: str = ""
    step: int = 0


def encode_checkpoint(ckpt: Checkpoint, names_in_order=None) -> bytes:
    names = list(ckpt.tensors) if names_in_order is None else list(names_in_order)
    if len(set(names)) != len(names):
        raise ValueError("checkpoint: duplicate tensor names")
    buf = io.BytesIO()
    buf.write(MAGIC + struct.pack("<II", VERSION, len(names)))
    for name in names:
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise ValueError(f"checkpoint: name too long: {name[:40]}...")
        buf.write(struct.pack("<H", len(raw)) + raw)
        buf.write(encode_tensor(ckpt.tensors[name]))
    h = ckpt.config_hash.encode("utf-8")
    buf.write(META + struct.pack("<H", len(h)) + h + struct.pack("<Q", int(ckpt.step)))
    return buf.getvalue()


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    data = encode_checkpoint(ckpt)
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def _read(fh, n: int) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise FormatError("truncated checkpoint")
    return buf


def decode_checkpoint(data: bytes) -> Checkpoint:
    fh = io.BytesIO(data)
    if _read(fh, 4) != MAGIC:
        raise FormatError("bad MCKP magic")
    version, count = struct.unpack("<II", _read(fh, 8))
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (n,) = struct.unpack("<H", _read(fh, 2))
        name = _read(fh, n).decode("utf-8")
        if name in tensors:
            raise FormatError(f"duplicate tensor name {name!r}")
        tensors[name] = read_tensor(fh)
    if _read(fh, 4) != META:
        raise FormatError("missing metadata block")
    (n,) = struct.unpack("<H", _read(fh, 2))
    config_hash = _read(fh, n).decode("utf-8")
    (step,) = struct.unpack("<Q", _read(fh, 8))
    if fh.read(1):
        raise FormatError("trailing bytes after metadata")
    return Checkpoint(tensors, config_hash, step)


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        return decode_checkpoint(fh.read())


def tensors_digest(tensors: dict[str, np.ndarray], prefix: str = "") -> str:
    """SHA-256 over the names and bytes of every tensor whose name starts with ``prefix``."""
    h = hashlib.sha256()
    for name in sorted(tensors):
        if name.startswith(prefix):
            h.update(name.encode())
            h.update(encode_tensor(tensors[name]))
    return h.hexdigest()
