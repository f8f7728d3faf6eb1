"""Backend manifests: the declared contract of every provider."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from ..errors import ConfigError
from ..types import ModelKind, ModelSpec
from .protocol import Backend, KIND_METHODS

# Kinds that participate in fusion weighting and therefore must declare
# a parameter count.
_SCORING_KINDS = ("lm_prompt", "lm_nli", "lm_embed", "vision_text")
# Kinds that return vectors and therefore must declare dim and space.
_EMBED_KINDS = ("lm_embed", "vision_text")


@dataclass(frozen=True)
class BackendManifest:
    """One entry of a ``backends.json`` file.

    ``endpoint`` is either the literal ``"mock"`` for the in-process
    deterministic backend or a base URL for an HTTP server.
    """

    model_id: str
    kind: str
    endpoint: str
    param_count: int | None = None
    dim: int | None = None
    space_id: str | None = None
    logprob_base: str | None = None
    options: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.model_id:
            raise ConfigError("backend model_id must be non-empty")
        if self.kind not in KIND_METHODS:
            raise ConfigError(
                f"backend {self.model_id!r} has unknown kind {self.kind!r}")
        if not self.endpoint:
            raise ConfigError(f"backend {self.model_id!r} endpoint must be non-empty")
        if self.kind in _SCORING_KINDS:
            if self.param_count is None or self.param_count <= 0:
                raise ConfigError(
                    f"backend {self.model_id!r} of kind {self.kind!r} must "
                    f"declare a positive param_count")
        if self.kind in _EMBED_KINDS:
            if self.dim is None or self.dim <= 0 or not self.space_id:
                raise ConfigError(
                    f"backend {self.model_id!r} of kind {self.kind!r} must "
                    f"declare dim and space_id")
        if self.kind == "lm_prompt":
            # Token scores must be natural logs; any other base would
            # silently rescale every score, so it is rejected up front.
            if self.logprob_base != "e":
                raise ConfigError(
                    f"backend {self.model_id!r} must declare logprob_base "
                    f"\"e\", got {self.logprob_base!r}")

    @property
    def is_mock(self) -> bool:
        return self.endpoint == "mock"

    def model_spec(self) -> ModelSpec:
        if self.kind not in _SCORING_KINDS:
            raise ConfigError(
                f"backend {self.model_id!r} of kind {self.kind!r} has no model spec")
        assert self.param_count is not None
        return ModelSpec(self.model_id, self.param_count, ModelKind(self.kind))

    @classmethod
    def from_json_dict(cls, obj: Mapping[str, Any]) -> "BackendManifest":
        return cls(
            model_id=obj.get("model_id", ""),
            kind=obj.get("kind", ""),
            endpoint=obj.get("endpoint", ""),
            param_count=obj.get("param_count"),
            dim=obj.get("dim"),
            space_id=obj.get("space_id"),
            logprob_base=obj.get("logprob_base"),
            options=dict(obj.get("options", {})),
        )


def load_manifests(path: str | Path) -> dict[str, BackendManifest]:
    """Load a ``backends.json`` file keyed by model id."""
    try:
        payload = json.loads(Path(path).read_text("utf-8"))
    except (OSError, json.JSONDecodeError) as err:
        raise ConfigError(f"cannot read backends file {path}: {err}") from err
    entries = payload.get("backends")
    if not isinstance(entries, list) or not entries:
        raise ConfigError(f"backends file {path} must hold a non-empty 'backends' list")
    manifests: dict[str, BackendManifest] = {}
    for entry in entries:
        manifest = BackendManifest.from_json_dict(entry)
        if manifest.model_id in manifests:
            raise ConfigError(f"duplicate backend id {manifest.model_id!r} in {path}")
        manifests[manifest.model_id] = manifest
    return manifests


def build_backend(manifest: BackendManifest) -> Backend:
    """Instantiate the protocol client for one manifest."""
    if manifest.is_mock:
        from .mock import MockBackend
        return MockBackend(manifest, seed=int(manifest.options.get("mock_seed", 0)))
    from .client import HttpBackend
    return HttpBackend(manifest)


def build_backends(manifests: Mapping[str, BackendManifest]) -> dict[str, Backend]:
    return {name: build_backend(m) for name, m in manifests.items()}
