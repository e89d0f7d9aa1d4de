"""Versioned binary container: named float32 arrays behind a JSON header.

Layout::

    magic (8 bytes) | version (u32 LE) | header length (u32 LE) | header JSON | payload

The header lists each array's name, shape and byte offset into the payload;
every payload is little-endian float32. Parameter checkpoints and scene
records share this layout and differ only in magic and metadata.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

CHECKPOINT_MAGIC = b"FDCKPT\x00\x01"
FORMAT_VERSION = 1


class ContainerError(ValueError):
    pass


def encode_container(arrays: Mapping[str, np.ndarray], meta: Optional[dict] = None, magic: bytes = CHECKPOINT_MAGIC) -> bytes:
    entries = []
    chunks = []
    offset = 0
    for name in arrays:
        arr = np.ascontiguousarray(np.asarray(arrays[name]), dtype="<f4")
        raw = arr.tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    header = json.dumps({"arrays": entries, "meta": meta or {}}, sort_keys=True, separators=(",", ":")).encode()
    return magic + struct.pack("<II", FORMAT_VERSION, len(header)) + header + b"".join(chunks)


def decode_container(blob: bytes, magic: bytes = CHECKPOINT_MAGIC, source: str = "<bytes>") -> tuple:
    if len(blob) < len(magic) + 8 or blob[: len(magic)] != magic:
        raise ContainerError(f"{source}: not a recognised container (bad magic)")
    version, hlen = struct.unpack_from("<II", blob, len(magic))
    if version != FORMAT_VERSION:
        raise ContainerError(f"{source}: unsupported format version {version} (expected {FORMAT_VERSION})")
    start = len(magic) + 8
    if len(blob) < start + hlen:
        raise ContainerError(f"{source}: truncated header")
    try:
        header = json.loads(blob[start : start + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerError(f"{source}: corrupt header") from exc
    payload = memoryview(blob)[start + hlen :]
    arrays = {}
    for e in header["arrays"]:
        end = e["offset"] + e["nbytes"]
        if end > len(payload):
            raise ContainerError(f"{source}: truncated payload for array {e['name']!r}")
        arr = np.frombuffer(payload[e["offset"] : end], dtype="<f4").reshape(e["shape"])
        arrays[e["name"]] = arr.astype(np.float32)
    return arrays, header["meta"]


def save_checkpoint(path, named_params, meta: Optional[dict] = None) -> None:
    """Write (name, Tensor-or-array) pairs to ``path`` as a float32 container."""
    arrays = {}
    for name, p in named_params:
        arrays[name] = getattr(p, "data", p)
    Path(path).write_bytes(encode_container(arrays, meta))


def load_checkpoint(path) -> tuple:
    path = Path(path)
    return decode_container(path.read_bytes(), source=str(path))


def restore_parameters(named_params, arrays: Mapping[str, np.ndarray]) -> None:
    """Copy stored arrays into live parameters, checking names and shapes."""
    for name, p in named_params:
        if name not in arrays:
            raise ContainerError(f"checkpoint is missing parameter {name!r}")
        stored = arrays[name]
        if tuple(stored.shape) != tuple(p.shape):
            raise ContainerError(f"parameter {name!r}: stored shape {tuple(stored.shape)} != live shape {tuple(p.shape)}")
        p.data = stored.astype(p.data.dtype)
