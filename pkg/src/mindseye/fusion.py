"""Late fusion of text and vision probabilities."""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigError
from .types import ModelSpec, ProbDistribution


def ensemble_weight(vision: ModelSpec, language: ModelSpec) -> float:
    """Vision weight from the model-size ratio.

    The weight is the logistic function of ``vision params / language
    params``: a vision model that is small next to its language partner
    contributes near 0.5, never less, and a comparatively large one
    approaches 1. Parameter counts are positive by construction.
    """
    ratio = vision.param_count / language.param_count
    return 1.0 / (1.0 + math.exp(-ratio))


def fuse(p_language: ProbDistribution, p_vision: ProbDistribution,
         weight: float, source: str | None = None) -> ProbDistribution:
    """Convex combination of two per-candidate distributions.

    ``weight`` is the vision share. The endpoints are exact: weight 0
    returns the language probabilities unchanged, weight 1 the vision
    probabilities. The result is flagged normalized only when both
    inputs are.
    """
    if len(p_language.probs) != len(p_vision.probs):
        raise ValueError(
            f"cannot fuse distributions of lengths {len(p_language.probs)} "
            f"and {len(p_vision.probs)}")
    if not math.isfinite(weight) or not 0.0 <= weight <= 1.0:
        raise ValueError(f"fusion weight {weight!r} outside [0, 1]")
    if source is None:
        source = f"fuse({p_language.source},{p_vision.source})"
    if weight == 0.0:
        probs = p_language.probs
    elif weight == 1.0:
        probs = p_vision.probs
    else:
        probs = tuple((1.0 - weight) * a + weight * b
                      for a, b in zip(p_language.probs, p_vision.probs))
    return ProbDistribution(probs, source,
                            normalized=p_language.normalized and p_vision.normalized)


WEIGHT_MODES = ("sigmoid_param_ratio", "fixed")


@dataclass(frozen=True)
class EnsembleConfig:
    """How the fusion weight is chosen.

    ``sigmoid_param_ratio`` derives it from model sizes; ``fixed`` uses
    ``fixed_weight`` for every pairing.
    """

    mode: str = "sigmoid_param_ratio"
    fixed_weight: float = 0.5

    def __post_init__(self) -> None:
        if self.mode not in WEIGHT_MODES:
            raise ConfigError(f"unknown ensemble weight mode {self.mode!r}")
        if not math.isfinite(self.fixed_weight) or not 0.0 <= self.fixed_weight <= 1.0:
            raise ConfigError(f"fixed weight {self.fixed_weight!r} outside [0, 1]")

    def resolve_weight(self, vision: ModelSpec, language: ModelSpec) -> float:
        if self.mode == "fixed":
            return self.fixed_weight
        return ensemble_weight(vision, language)
