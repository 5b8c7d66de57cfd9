# Checkpoint container format
#
# Layout (all integers little-endian):
#   magic      8 bytes  b"PTDECKPT"
#   version    uint32   FORMAT_VERSION
#   count      uint64   number of entries
#   hash_len   uint64   followed by hash_len bytes of UTF-8 config hash (may be empty)
#   entries    count times:
#     name_len uint64, name (UTF-8), rank uint64, dims (rank x int64), payload (prod(dims) x float64)
#
# Payloads are written with numpy's '<f8' dtype so the round trip is bit-exact.

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable

import numpy as np

from ..exceptions import CheckpointError
from .params import ParamStore

MAGIC = b"PTDECKPT"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    """Named parameter archive plus the config hash of the run that produced it."""

    params: Dict[str, np.ndarray] = field(default_factory=dict)
    config_hash: str = ""

    @classmethod
    def from_store(cls, store: ParamStore, prefixes: Iterable[str] = ("",), config_hash: str = "") -> "Checkpoint":
        params = {}
        for name, tensor in store.items():
            if name.startswith(tuple(prefixes)):
                params[name] = tensor.data.copy()
        return cls(params, config_hash)

    def has_prefix(self, prefix: str) -> bool:
        return any(name.startswith(prefix) for name in self.params)

    def require(self, *prefixes: str) -> None:
        """
        Raises:
            CheckpointError: If no parameter starts with one of ``prefixes``
        """
        missing = [p for p in prefixes if not self.has_prefix(p)]
        if missing:
            raise CheckpointError(f"checkpoint lacks parameters under {missing}")

    def merge(self, other: "Checkpoint") -> "Checkpoint":
        return Checkpoint({**self.params, **other.params}, self.config_hash or other.config_hash)


def encode_checkpoint(checkpoint: Checkpoint) -> bytes:
    encoded_hash = checkpoint.config_hash.encode("utf-8")
    chunks = [
        MAGIC,
        struct.pack("<IQ", FORMAT_VERSION, len(checkpoint.params)),
        struct.pack("<Q", len(encoded_hash)),
        encoded_hash,
    ]
    for name, value in checkpoint.params.items():
        encoded = name.encode("utf-8")
        value = np.asarray(value, dtype=np.float64)
        chunks.append(struct.pack("<Q", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<Q", value.ndim))
        chunks.append(np.asarray(value.shape, dtype="<i8").tobytes())
        chunks.append(np.ascontiguousarray(value, dtype="<f8").tobytes())
    return b"".join(chunks)


def decode_checkpoint(data: bytes) -> Checkpoint:
    """
    Raises:
        CheckpointError: On bad magic, unsupported version or truncated data
    """
    view = memoryview(data)
    offset = 0

    def take(n: int) -> memoryview:
        nonlocal offset
        if offset + n > len(view):
            raise CheckpointError("truncated checkpoint")
        chunk = view[offset : offset + n]
        offset += n
        return chunk

    if bytes(take(len(MAGIC))) != MAGIC:
        raise CheckpointError("not a ptde checkpoint (bad magic)")
    version, count = struct.unpack("<IQ", take(12))
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (hash_len,) = struct.unpack("<Q", take(8))
    config_hash = bytes(take(hash_len)).decode("utf-8")

    params: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<Q", take(8))
        name = bytes(take(name_len)).decode("utf-8")
        (rank,) = struct.unpack("<Q", take(8))
        dims = tuple(int(d) for d in np.frombuffer(take(8 * rank), dtype="<i8"))
        size = int(np.prod(dims)) if dims else 1
        payload = np.frombuffer(take(8 * size), dtype="<f8").astype(np.float64).reshape(dims)
        if name in params:
            raise CheckpointError(f"duplicate entry {name!r}")
        params[name] = payload
    if offset != len(view):
        raise CheckpointError("trailing bytes after last entry")
    return Checkpoint(params, config_hash)


def save_checkpoint(path: str | Path, checkpoint: Checkpoint) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_checkpoint(checkpoint))
    return path


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    return decode_checkpoint(path.read_bytes())
