"""Zero-shot multiple-choice inference with visual imagination.

Candidates are scored by language models (token plausibility,
entailment, or embedding similarity) and, in parallel, against images
retrieved and synthesized for the instance; the two probability
distributions are fused with a weight derived from the models' relative
sizes. The package also ships the datasets, metrics, pipeline, and
analyses needed to evaluate the approach end to end.
"""
from __future__ import annotations

from .fusion import EnsembleConfig, ensemble_weight, fuse
from .imagination import ImaginationConfig
from .pipeline import LanguageModelEntry, PipelineRun, RunManifest, run
from .report import RunReport
from .scoring import predict, score_nli, score_prompt_lm, softmax
from .types import (Candidate, Embedding, ImageRecord, ImageSource,
                    ImaginationDirection, ImaginationSet, ModelKind, ModelSpec,
                    ProbDistribution, ScoreVector, TaskInstance, TaskKind)

__version__ = "0.1.0"

__all__ = [
    "Candidate",
    "Embedding",
    "EnsembleConfig",
    "ImageRecord",
    "ImageSource",
    "ImaginationConfig",
    "ImaginationDirection",
    "ImaginationSet",
    "LanguageModelEntry",
    "ModelKind",
    "ModelSpec",
    "PipelineRun",
    "ProbDistribution",
    "RunManifest",
    "RunReport",
    "ScoreVector",
    "TaskInstance",
    "TaskKind",
    "__version__",
    "ensemble_weight",
    "fuse",
    "predict",
    "run",
    "score_nli",
    "score_prompt_lm",
    "softmax",
]
