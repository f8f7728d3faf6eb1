"""Exception hierarchy shared across the package."""
from __future__ import annotations


class MindsEyeError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(MindsEyeError, ValueError):
    """Invalid or inconsistent configuration, detected before work starts."""


class TemplateError(MindsEyeError, ValueError):
    """A prompt template could not be validated or rendered."""


class DatasetError(MindsEyeError, ValueError):
    """A dataset file failed to parse or validate.

    Carries the offending line number when one is known.
    """

    def __init__(self, message: str, *, path: str | None = None,
                 line: int | None = None) -> None:
        location = ""
        if path is not None:
            location = f" [{path}" + (f":{line}" if line is not None else "") + "]"
        super().__init__(message + location)
        self.path = path
        self.line = line


class BackendError(MindsEyeError):
    """Base class for scoring/imagination backend failures."""


class TransportError(BackendError):
    """Provider unreachable or transient failure; safe to retry."""


class ProviderQuotaError(BackendError):
    """Provider quota or billing failure; fatal, never retried."""


class ContractError(BackendError):
    """A backend response violated its declared contract (dimension,
    value range, count); fatal with a diagnostic, never retried."""
