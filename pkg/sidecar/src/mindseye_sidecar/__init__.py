"""Reference HTTP server for the backend wire protocol.

Wraps desk-scale checkpoints (a causal LM, an NLI scorer, a sentence
embedder, a joint vision-text embedder, and an image generator) behind
the ``/v1/*`` endpoints the inference package's HTTP client speaks,
and ships the conformance suite that certifies any such server.
"""
from __future__ import annotations

from .config import ModelEntry, SidecarConfig, load_config
from .errors import ConfigError, SidecarError

__all__ = [
    "ConfigError",
    "ModelEntry",
    "SidecarConfig",
    "SidecarError",
    "load_config",
]
