"""Canonical JSON serialization and stable hashing.

Every artifact that is hashed, cached, or compared byte-for-byte goes
through this module: floats are rounded to 9 significant digits before
serialization, keys are sorted, and separators are fixed, so the same
logical value always produces the same bytes.
"""
from __future__ import annotations

import hashlib
import json
import math
from typing import Any

SIGNIFICANT_DIGITS = 9


def round_float(value: float) -> float:
    """Round to 9 significant digits via a decimal round trip."""
    if not math.isfinite(value):
        raise ValueError(f"non-finite float cannot be serialized: {value!r}")
    return float(f"{value:.{SIGNIFICANT_DIGITS}g}")


def round_floats(obj: Any) -> Any:
    """Recursively copy ``obj`` with all floats rounded for serialization."""
    if isinstance(obj, bool) or obj is None or isinstance(obj, (int, str)):
        return obj
    if isinstance(obj, float):
        return round_float(obj)
    if isinstance(obj, dict):
        return {key: round_floats(value) for key, value in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round_floats(item) for item in obj]
    raise TypeError(f"cannot canonicalize value of type {type(obj).__name__}")


def canonical_dumps(obj: Any, indent: int | None = None) -> str:
    """Serialize to canonical JSON: rounded floats, sorted keys, fixed separators."""
    separators = (",", ": ") if indent is not None else (",", ":")
    return json.dumps(round_floats(obj), sort_keys=True, indent=indent,
                      separators=separators, ensure_ascii=False)


def canonical_bytes(obj: Any) -> bytes:
    return canonical_dumps(obj).encode("utf-8")


def stable_hash(obj: Any) -> str:
    """Hex SHA-256 of the canonical JSON encoding of ``obj``."""
    return hashlib.sha256(canonical_bytes(obj)).hexdigest()


def text_hash(text: str) -> str:
    """Hex SHA-256 of UTF-8 encoded text."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def content_hash(data: bytes) -> str:
    """Hex SHA-256 of raw bytes; the identity of stored images."""
    return hashlib.sha256(data).hexdigest()


def derive_seed(*parts: Any) -> int:
    """Derive a 64-bit seed from arbitrary JSON-serializable parts.

    Used wherever a run-level seed must be split into independent
    per-item streams without correlation between items.
    """
    digest = hashlib.sha256(canonical_bytes(list(parts))).digest()
    return int.from_bytes(digest[:8], "little")
