# Utility helpers for ptde
# One-hot encodings, stable hashing and the hash-stamped CSV tables every stage writes

import hashlib
from pathlib import Path
from typing import Any

import numpy as np
import orjson
import pandas as pd


### One-hot encodings ###
def one_hot(indices, depth: int) -> np.ndarray:
    """
    One-hot encode integer indices along a new trailing axis.

    Negative indices encode as the all-zero vector (used for "no previous action").
    """
    indices = np.asarray(indices, dtype=np.int64)
    out = np.zeros(indices.shape + (depth,), dtype=np.float64)
    valid = indices >= 0
    if np.any(indices[valid] >= depth):
        raise ValueError(f"index out of range for depth {depth}")
    np.put_along_axis(out, np.where(valid, indices, 0)[..., None], valid[..., None].astype(np.float64), axis=-1)
    return out


def agent_ids(n_agents: int) -> np.ndarray:
    return np.eye(n_agents, dtype=np.float64)


### Hashing ###
def canonical_json(value: Any) -> bytes:
    return orjson.dumps(value, option=orjson.OPT_SORT_KEYS | orjson.OPT_SERIALIZE_NUMPY)


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def file_digest(path: str | Path) -> str:
    """SHA-256 of a file's bytes."""
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


### Result tables ###
HASH_COMMENT = "# config_hash="


def write_table(path: str | Path, frame: pd.DataFrame, config_hash: str) -> None:
    """Write a CSV whose first line records the config hash of the run that produced it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"{HASH_COMMENT}{config_hash}\n")
        frame.to_csv(fh, index=False, lineterminator="\n")


def read_table(path: str | Path) -> tuple[pd.DataFrame, str]:
    """
    Read a table written by ``write_table``.

    Returns:
        (rows, config hash); the hash is empty when the comment line is absent
    """
    path = Path(path)
    with open(path) as fh:
        first = fh.readline().strip()
    config_hash = first[len(HASH_COMMENT) :] if first.startswith(HASH_COMMENT) else ""
    return pd.read_csv(path, comment="#"), config_hash
