"""On-disk embedding cache.

One cache file holds every embedding a backend produced for a run,
stored once and reused forever after. Vectors are L2-normalized at
insertion time and stored as little-endian float32 rows behind a JSON
header, so a cache file is portable across platforms and reads back
bit-identically.

Layout: 8-byte little-endian row-data offset is implicit; the file is
``[8-byte LE header length][header JSON][float32 LE rows]`` with header
``{"space_id", "dim", "count", "key_index": {key: row}}``.
"""
from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

from .errors import ContractError
from .types import Embedding

_LEN_STRUCT = struct.Struct("<Q")


class EmbeddingCache:
    """Append-only store of unit-normalized vectors keyed by string."""

    def __init__(self, path: str | Path, space_id: str, dim: int) -> None:
        if dim <= 0:
            raise ValueError("embedding dimension must be positive")
        self.path = Path(path)
        self.space_id = space_id
        self.dim = dim
        self._index: dict[str, int] = {}
        self._rows: list[np.ndarray] = []
        self._dirty = False
        if self.path.exists():
            self._load()

    def _load(self) -> None:
        raw = self.path.read_bytes()
        if len(raw) < _LEN_STRUCT.size:
            raise ContractError(f"embedding cache {self.path} is truncated")
        (header_len,) = _LEN_STRUCT.unpack_from(raw, 0)
        header_end = _LEN_STRUCT.size + header_len
        header = json.loads(raw[_LEN_STRUCT.size:header_end].decode("utf-8"))
        if header["space_id"] != self.space_id or header["dim"] != self.dim:
            raise ContractError(
                f"embedding cache {self.path} holds space "
                f"{header['space_id']!r} dim {header['dim']}, expected "
                f"{self.space_id!r} dim {self.dim}")
        count = header["count"]
        data = np.frombuffer(raw[header_end:], dtype="<f4")
        if data.size != count * self.dim:
            raise ContractError(f"embedding cache {self.path} row data is truncated")
        matrix = data.reshape(count, self.dim)
        self._rows = [matrix[i].copy() for i in range(count)]
        self._index = {key: int(row) for key, row in header["key_index"].items()}

    def __contains__(self, key: str) -> bool:
        return key in self._index

    def __len__(self) -> int:
        return len(self._index)

    def get(self, key: str) -> Embedding | None:
        row = self._index.get(key)
        if row is None:
            return None
        values = tuple(float(v) for v in self._rows[row])
        return Embedding(values, self.space_id)

    def put(self, key: str, values) -> Embedding:
        """Normalize, downcast to float32, store, and return the stored form.

        Callers must use the returned embedding, not their input: runs
        that hit the cache later will see exactly these float32 values.
        Re-inserting an existing key returns the stored row unchanged.
        """
        existing = self.get(key)
        if existing is not None:
            return existing
        arr = np.asarray(values, dtype=np.float64)
        if arr.shape != (self.dim,):
            raise ContractError(
                f"embedding for {key!r} has shape {arr.shape}, expected ({self.dim},)")
        norm = float(np.linalg.norm(arr))
        if norm == 0.0 or not np.isfinite(norm):
            raise ContractError(f"embedding for {key!r} cannot be normalized")
        row = (arr / norm).astype(np.float32)
        self._index[key] = len(self._rows)
        self._rows.append(row)
        self._dirty = True
        return Embedding(tuple(float(v) for v in row), self.space_id)

    def save(self) -> None:
        """Write atomically; a no-op when nothing changed."""
        if not self._dirty:
            return
        header = {
            "space_id": self.space_id,
            "dim": self.dim,
            "count": len(self._rows),
            "key_index": self._index,
        }
        header_bytes = json.dumps(header, sort_keys=True,
                                  separators=(",", ":")).encode("utf-8")
        self.path.parent.mkdir(parents=True, exist_ok=True)
        tmp = self.path.with_name(self.path.name + ".tmp")
        with open(tmp, "wb") as fh:
            fh.write(_LEN_STRUCT.pack(len(header_bytes)))
            fh.write(header_bytes)
            for row in self._rows:
                fh.write(row.astype("<f4").tobytes())
        os.replace(tmp, self.path)
        self._dirty = False
