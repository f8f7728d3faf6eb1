"""Float formatting for wire payloads.

The protocol fixes floats at nine significant digits so that a value
survives a serialize/parse round trip bit-identically on both sides.
Clients apply the same rule, so the sidecar must round before
serializing rather than trusting ``json.dumps`` repr output.
"""
from __future__ import annotations

from typing import Any


def round9(value: float) -> float:
    """Round to nine significant digits, the wire resolution."""
    return float(f"{value:.9g}")


def round_floats(obj: Any) -> Any:
    """Return a copy of ``obj`` with every float rounded for the wire.

    Bools are ints in Python but not floats, so they pass through
    untouched, as do ints and strings.
    """
    if isinstance(obj, float):
        return round9(obj)
    if isinstance(obj, dict):
        return {key: round_floats(value) for key, value in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round_floats(item) for item in obj]
    return obj
