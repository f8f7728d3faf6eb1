"""Exception hierarchy for the sidecar."""
from __future__ import annotations


class SidecarError(Exception):
    """Base class for every sidecar failure."""


class ConfigError(SidecarError):
    """Bad configuration or a checkpoint that violates its declaration.

    Raised during startup only: once the server is up, every request is
    answered from models that already passed their contract probes.
    """
