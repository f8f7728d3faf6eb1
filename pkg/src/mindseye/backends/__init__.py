"""Scoring and imagination providers behind one uniform interface."""
from __future__ import annotations

from .manifest import BackendManifest, build_backend, build_backends, load_manifests
from .protocol import Backend, ENDPOINTS
from .mock import MockBackend
from .cache import CachingBackend, ResponseCache
from .client import HttpBackend

__all__ = [
    "Backend",
    "BackendManifest",
    "CachingBackend",
    "ENDPOINTS",
    "HttpBackend",
    "MockBackend",
    "ResponseCache",
    "build_backend",
    "build_backends",
    "load_manifests",
]
