"""Sidecar configuration: which checkpoints to serve, and as what.

The config file (``sidecar.json``) declares one entry per served model:
its protocol kind, its checkpoint directory, and for embedders the
space id and dimensionality the server promises on the wire. Declared
dims are asserted against the loaded checkpoints at startup; a mismatch
is fatal before the first request, never during one.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

from .errors import ConfigError

KNOWN_KINDS = ("lm_prompt", "lm_nli", "lm_embed", "vision_text", "generate")
# Kinds that return vectors and therefore must declare dim and space.
EMBED_KINDS = ("lm_embed", "vision_text")


@dataclass(frozen=True)
class ModelEntry:
    """One served model: a checkpoint directory plus its declarations."""

    kind: str
    checkpoint: str
    space_id: str | None = None
    dim: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in KNOWN_KINDS:
            raise ConfigError(f"unknown model kind {self.kind!r}")
        if not self.checkpoint:
            raise ConfigError("model checkpoint must be non-empty")
        if self.kind in EMBED_KINDS:
            if self.dim is None or self.dim <= 0 or not self.space_id:
                raise ConfigError(
                    f"kind {self.kind!r} must declare dim and space_id")


@dataclass(frozen=True)
class SidecarConfig:
    """Everything ``serve`` needs: bind address, device, model table."""

    models: Mapping[str, ModelEntry]
    host: str = "127.0.0.1"
    port: int = 8601
    device: str = "cpu"
    max_batch: int = 8

    def __post_init__(self) -> None:
        if not self.models:
            raise ConfigError("sidecar config must declare at least one model")
        if self.max_batch < 1:
            raise ConfigError("max_batch must be at least 1")

    @classmethod
    def from_json_dict(cls, obj: Mapping[str, Any],
                       base_dir: Path | None = None) -> "SidecarConfig":
        models_obj = obj.get("models")
        if not isinstance(models_obj, dict) or not models_obj:
            raise ConfigError("sidecar config must hold a non-empty 'models' table")
        models: dict[str, ModelEntry] = {}
        for name, entry in models_obj.items():
            checkpoint = entry.get("checkpoint", "")
            if base_dir is not None and checkpoint:
                # Checkpoints are looked up relative to the config file,
                # so a checkpoint tree can be moved as one unit.
                checkpoint = str((base_dir / checkpoint).resolve())
            models[name] = ModelEntry(
                kind=entry.get("kind", ""),
                checkpoint=checkpoint,
                space_id=entry.get("space_id"),
                dim=entry.get("dim"),
            )
        return cls(
            models=models,
            host=obj.get("host", "127.0.0.1"),
            port=int(obj.get("port", 8601)),
            device=obj.get("device", "cpu"),
            max_batch=int(obj.get("max_batch", 8)),
        )


def load_config(path: str | Path) -> SidecarConfig:
    """Load ``sidecar.json``, resolving checkpoint paths beside it."""
    path = Path(path)
    try:
        payload = json.loads(path.read_text("utf-8"))
    except (OSError, json.JSONDecodeError) as err:
        raise ConfigError(f"cannot read sidecar config {path}: {err}") from err
    return SidecarConfig.from_json_dict(payload, base_dir=path.parent)
