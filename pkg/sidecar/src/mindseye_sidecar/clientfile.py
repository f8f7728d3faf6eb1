"""Compose a client backends file for a running sidecar.

The inference package declares its providers in a ``backends.json``;
everything that file needs about sidecar-served models is already
known after ``build_all``: kinds and spaces from ``sidecar.json`` and
true parameter counts from ``params.json``. This module turns those
plus a base URL into ready-to-use client entries, optionally adding
the in-process mock as the search provider, since retrieval is an
external service the sidecar does not serve.
"""
from __future__ import annotations

import json
from pathlib import Path

from .config import EMBED_KINDS
from .errors import ConfigError

_SCORING_KINDS = ("lm_prompt", "lm_nli", "lm_embed", "vision_text")


def emit_backends(checkpoint_root: str | Path, url: str, *,
                  mock_search_seed: int | None = None) -> dict:
    """Client backend entries for every model under ``checkpoint_root``."""
    root = Path(checkpoint_root)
    try:
        config = json.loads((root / "sidecar.json").read_text("utf-8"))
        params = json.loads((root / "params.json").read_text("utf-8"))
    except (OSError, json.JSONDecodeError) as err:
        raise ConfigError(
            f"checkpoint root {root} lacks build outputs: {err}") from err
    entries: list[dict] = []
    for name, model in config.get("models", {}).items():
        kind = model.get("kind", "")
        entry: dict = {"model_id": name, "kind": kind, "endpoint": url}
        if kind in _SCORING_KINDS:
            if name not in params:
                raise ConfigError(f"params.json has no count for {name!r}")
            entry["param_count"] = int(params[name])
        if kind in EMBED_KINDS:
            entry["dim"] = model.get("dim")
            entry["space_id"] = model.get("space_id")
        if kind == "lm_prompt":
            entry["logprob_base"] = "e"
        entries.append(entry)
    if mock_search_seed is not None:
        entries.append({"model_id": "mock-search", "kind": "search",
                        "endpoint": "mock",
                        "options": {"mock_seed": mock_search_seed}})
    return {"backends": entries}
