"""Binary embedding cache: normalization, persistence, validation."""
from __future__ import annotations

import math
import random
import struct

import numpy as np
import pytest

from mindseye.embcache import EmbeddingCache
from mindseye.errors import ContractError


def test_put_normalizes_and_returns_stored_form(tmp_path):
    cache = EmbeddingCache(tmp_path / "e.bin", "s", 3)
    stored = cache.put("text:k1", [3.0, 0.0, 4.0])
    norm = math.sqrt(sum(v * v for v in stored.values))
    assert abs(norm - 1.0) < 1e-6
    # stored values are exactly the float32 downcast of the unit vector
    assert stored.values == tuple(float(np.float32(v)) for v in (0.6, 0.0, 0.8))
    assert cache.get("text:k1") == stored


def test_reinsert_returns_existing_row(tmp_path):
    cache = EmbeddingCache(tmp_path / "e.bin", "s", 2)
    first = cache.put("k", [1.0, 1.0])
    second = cache.put("k", [5.0, 0.0])
    assert second == first


def test_round_trip_is_bit_identical(tmp_path):
    path = tmp_path / "e.bin"
    cache = EmbeddingCache(path, "clip", 8)
    rng = random.Random(4)
    stored = {}
    for i in range(50):
        key = f"text:{i}"
        stored[key] = cache.put(key, [rng.uniform(-1, 1) for _ in range(8)])
    cache.save()
    reloaded = EmbeddingCache(path, "clip", 8)
    assert len(reloaded) == 50
    for key, emb in stored.items():
        assert reloaded.get(key) == emb


def test_get_missing_and_contains(tmp_path):
    cache = EmbeddingCache(tmp_path / "e.bin", "s", 2)
    assert cache.get("nope") is None
    assert "nope" not in cache
    cache.put("yes", [1.0, 0.0])
    assert "yes" in cache


def test_save_is_noop_when_clean(tmp_path):
    path = tmp_path / "e.bin"
    cache = EmbeddingCache(path, "s", 2)
    cache.put("k", [1.0, 0.0])
    cache.save()
    stamp = path.read_bytes()
    cache.save()
    assert path.read_bytes() == stamp
    reloaded = EmbeddingCache(path, "s", 2)
    reloaded.save()
    assert path.read_bytes() == stamp


def test_space_and_dim_mismatch_rejected(tmp_path):
    path = tmp_path / "e.bin"
    cache = EmbeddingCache(path, "clip", 4)
    cache.put("k", [1.0, 0.0, 0.0, 0.0])
    cache.save()
    with pytest.raises(ContractError):
        EmbeddingCache(path, "other", 4)
    with pytest.raises(ContractError):
        EmbeddingCache(path, "clip", 8)


def test_truncated_file_rejected(tmp_path):
    path = tmp_path / "e.bin"
    cache = EmbeddingCache(path, "s", 4)
    cache.put("k", [1.0, 2.0, 3.0, 4.0])
    cache.save()
    raw = path.read_bytes()
    path.write_bytes(raw[:-4])
    with pytest.raises(ContractError):
        EmbeddingCache(path, "s", 4)
    path.write_bytes(raw[:4])
    with pytest.raises(ContractError):
        EmbeddingCache(path, "s", 4)


def test_put_validation(tmp_path):
    cache = EmbeddingCache(tmp_path / "e.bin", "s", 3)
    with pytest.raises(ContractError):
        cache.put("short", [1.0, 2.0])
    with pytest.raises(ContractError):
        cache.put("zero", [0.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        EmbeddingCache(tmp_path / "bad.bin", "s", 0)


def test_layout_is_little_endian_float32(tmp_path):
    path = tmp_path / "e.bin"
    cache = EmbeddingCache(path, "s", 2)
    cache.put("only", [1.0, 0.0])
    cache.save()
    raw = path.read_bytes()
    (header_len,) = struct.unpack_from("<Q", raw, 0)
    header = raw[8:8 + header_len].decode("utf-8")
    assert '"dim":2' in header and '"count":1' in header
    rows = np.frombuffer(raw[8 + header_len:], dtype="<f4")
    assert rows.tolist() == [1.0, 0.0]
