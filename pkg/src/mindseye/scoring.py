"""Language-model scoring strategies and shared numeric primitives.

All arithmetic here is pure Python over small vectors (one entry per
candidate). That keeps results bit-reproducible across platforms and
independent of any array library's reduction order.
"""
from __future__ import annotations

import math
from typing import Sequence

from .errors import ContractError
from .types import Embedding, ProbDistribution, ScoreVector

# Floor for the mean negative log-likelihood, so the reciprocal score
# stays finite for near-certain continuations.
MEAN_NLL_FLOOR = 1e-6


def predict(probs: Sequence[float]) -> int:
    """Index of the highest probability; ties break to the lowest index."""
    if len(probs) == 0:
        raise ValueError("cannot predict from an empty distribution")
    best = 0
    for i in range(1, len(probs)):
        if probs[i] > probs[best]:
            best = i
    return best


def softmax(values: Sequence[float]) -> list[float]:
    """Numerically stable softmax: shifts by the max before exponentiating."""
    if len(values) == 0:
        raise ValueError("cannot take softmax of an empty vector")
    peak = max(values)
    exps = [math.exp(v - peak) for v in values]
    total = sum(exps)
    return [e / total for e in exps]


def softmax_scores(scores: ScoreVector) -> ProbDistribution:
    """Turn raw scores into a normalized distribution."""
    return ProbDistribution(tuple(softmax(scores.scores)), scores.source)


def score_prompt_lm(answer_logprobs: Sequence[float]) -> float:
    """Length-normalized plausibility of an answer span.

    Takes the natural-log token probabilities of the answer span under
    the full prompt and returns the reciprocal of their mean negative
    log-likelihood, floored at ``MEAN_NLL_FLOOR``. Longer answers are
    not penalized because the mean normalizes by token count.
    """
    if len(answer_logprobs) == 0:
        raise ValueError("answer span produced no tokens")
    for lp in answer_logprobs:
        if not math.isfinite(lp) or lp > 0.0:
            raise ContractError(f"invalid log-probability {lp!r}")
    mean_nll = -sum(answer_logprobs) / len(answer_logprobs)
    return 1.0 / max(MEAN_NLL_FLOOR, mean_nll)


def score_nli(entailment_probs: Sequence[float], source: str,
              renormalize: bool = False) -> ProbDistribution:
    """Entailment probabilities as candidate scores.

    By default the per-candidate probabilities are passed through
    unnormalized; they are already probabilities and renormalizing them
    would discard the model's calibration. With ``renormalize`` they are
    scaled to sum to one (uniform when all are zero).
    """
    if len(entailment_probs) == 0:
        raise ValueError("no entailment probabilities given")
    for p in entailment_probs:
        if not math.isfinite(p) or not 0.0 <= p <= 1.0:
            raise ContractError(f"entailment probability {p!r} outside [0, 1]")
    if not renormalize:
        return ProbDistribution(tuple(entailment_probs), source, normalized=False)
    total = sum(entailment_probs)
    if total == 0.0:
        uniform = 1.0 / len(entailment_probs)
        return ProbDistribution(tuple([uniform] * len(entailment_probs)), source)
    return ProbDistribution(tuple(p / total for p in entailment_probs), source)


def cosine(a: Embedding, b: Embedding) -> float:
    """Cosine similarity; refuses mismatched spaces and zero vectors."""
    if a.space_id != b.space_id:
        raise ValueError(f"embedding space mismatch: {a.space_id!r} vs {b.space_id!r}")
    if a.dim != b.dim:
        raise ValueError(f"embedding dimension mismatch: {a.dim} vs {b.dim}")
    dot = sum(x * y for x, y in zip(a.values, b.values))
    norm_a = math.sqrt(sum(x * x for x in a.values))
    norm_b = math.sqrt(sum(y * y for y in b.values))
    if norm_a == 0.0 or norm_b == 0.0:
        raise ValueError("cosine undefined for zero-norm embedding")
    return dot / (norm_a * norm_b)


def score_embedding(query: Embedding, candidates: Sequence[Embedding],
                    source: str) -> ScoreVector:
    """Cosine of the query against each candidate embedding."""
    if len(candidates) == 0:
        raise ValueError("no candidate embeddings given")
    return ScoreVector(tuple(cosine(query, c) for c in candidates), source)
