"""Core domain types.

Everything downstream (scoring, imagination, fusion, evaluation) is
expressed over these types. All of them are immutable after
construction, which is what makes instance-parallel execution safe.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping

CANONICAL_SCHEMA = "zlavi/1"

# Tolerances for probability invariants. The range check allows a few
# ulps of slack because convex combinations of floats can overshoot the
# closed interval by rounding alone.
PROB_SUM_TOL = 1e-9
PROB_RANGE_TOL = 1e-12


class TaskKind(str, Enum):
    """The four task families the framework understands."""

    WSD = "wsd"
    SCIENCE_QA = "science_qa"
    TOPIC = "topic"
    PROBE = "probe"


class ImaginationDirection(str, Enum):
    """Which side of the instance gets imagined as images."""

    IMAGINE_CANDIDATES = "imagine_candidates"
    IMAGINE_QUERY = "imagine_query"


_DEFAULT_DIRECTION = {
    TaskKind.WSD: ImaginationDirection.IMAGINE_CANDIDATES,
    TaskKind.SCIENCE_QA: ImaginationDirection.IMAGINE_CANDIDATES,
    TaskKind.PROBE: ImaginationDirection.IMAGINE_CANDIDATES,
    TaskKind.TOPIC: ImaginationDirection.IMAGINE_QUERY,
}


def default_direction(kind: TaskKind) -> ImaginationDirection:
    """Default imagination direction for a task kind.

    Sense definitions, answers, and objects are short and picturable, so
    they are imagined directly; topic labels are abstract, so the query
    sentence is imagined instead and labels stay on the text side.
    """
    return _DEFAULT_DIRECTION[kind]


@dataclass(frozen=True)
class Candidate:
    """One answer option.

    ``surface`` is the text used in prompts; ``imagination_text`` is the
    text handed to image search and synthesis (for word senses this is
    the gloss, for answers the answer itself). It defaults to the
    surface form.
    """

    surface: str
    imagination_text: str = ""

    def __post_init__(self) -> None:
        if not self.surface:
            raise ValueError("candidate surface must be non-empty")
        if not self.imagination_text:
            object.__setattr__(self, "imagination_text", self.surface)


@dataclass(frozen=True)
class TaskInstance:
    """A single multiple-choice decision.

    ``gold_distribution`` is present only for probe instances, where the
    reference is a distribution over the candidate vocabulary instead of
    a single index; ``gold`` is then its argmax.
    """

    id: str
    task_kind: TaskKind
    query_text: str
    candidates: tuple[Candidate, ...]
    gold: int
    gold_distribution: tuple[float, ...] | None = None
    metadata: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("instance id must be non-empty")
        if len(self.candidates) < 2:
            raise ValueError(f"instance {self.id!r} needs at least 2 candidates")
        if not 0 <= self.gold < len(self.candidates):
            raise ValueError(
                f"instance {self.id!r} gold index {self.gold} out of range "
                f"for {len(self.candidates)} candidates")
        if self.gold_distribution is not None:
            if len(self.gold_distribution) != len(self.candidates):
                raise ValueError(
                    f"instance {self.id!r} gold distribution length "
                    f"{len(self.gold_distribution)} != {len(self.candidates)}")
            if any(not math.isfinite(p) or p < 0 for p in self.gold_distribution):
                raise ValueError(
                    f"instance {self.id!r} gold distribution has invalid weights")

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "schema": CANONICAL_SCHEMA,
            "id": self.id,
            "task_kind": self.task_kind.value,
            "query_text": self.query_text,
            "candidates": [
                {"surface": c.surface, "imagination_text": c.imagination_text}
                for c in self.candidates
            ],
            "gold": self.gold,
            "gold_distribution": (
                None if self.gold_distribution is None
                else list(self.gold_distribution)
            ),
            "metadata": dict(self.metadata),
        }

    @classmethod
    def from_json_dict(cls, obj: Mapping[str, Any]) -> "TaskInstance":
        schema = obj.get("schema")
        if schema != CANONICAL_SCHEMA:
            raise ValueError(f"unsupported instance schema: {schema!r}")
        dist = obj.get("gold_distribution")
        return cls(
            id=obj["id"],
            task_kind=TaskKind(obj["task_kind"]),
            query_text=obj["query_text"],
            candidates=tuple(
                Candidate(c["surface"], c.get("imagination_text", ""))
                for c in obj["candidates"]
            ),
            gold=obj["gold"],
            gold_distribution=None if dist is None else tuple(dist),
            metadata=dict(obj.get("metadata", {})),
        )


@dataclass(frozen=True)
class ScoreVector:
    """Raw per-candidate scores from one scorer, pre-normalization."""

    scores: tuple[float, ...]
    source: str

    def __post_init__(self) -> None:
        if not self.scores:
            raise ValueError("score vector must be non-empty")
        if any(not math.isfinite(s) for s in self.scores):
            raise ValueError(f"score vector from {self.source!r} has non-finite entries")


@dataclass(frozen=True)
class ProbDistribution:
    """Per-candidate probabilities from one scorer.

    ``normalized`` distinguishes true distributions (softmax outputs,
    fused outputs) from raw per-candidate probabilities that are not
    renormalized, such as entailment pass-through scores. The sum-to-one
    invariant is enforced only when ``normalized`` is true.
    """

    probs: tuple[float, ...]
    source: str
    normalized: bool = True

    def __post_init__(self) -> None:
        if not self.probs:
            raise ValueError("probability vector must be non-empty")
        for p in self.probs:
            if not math.isfinite(p) or p < -PROB_RANGE_TOL or p > 1.0 + PROB_RANGE_TOL:
                raise ValueError(
                    f"probability {p!r} from {self.source!r} outside [0, 1]")
        if self.normalized:
            total = sum(self.probs)
            if abs(total - 1.0) > PROB_SUM_TOL:
                raise ValueError(
                    f"normalized distribution from {self.source!r} sums to {total!r}")


class ModelKind(str, Enum):
    """What a scoring model is, which decides how it is prompted."""

    LM_PROMPT = "lm_prompt"
    LM_NLI = "lm_nli"
    LM_EMBED = "lm_embed"
    VISION_TEXT = "vision_text"


@dataclass(frozen=True)
class ModelSpec:
    """Identity and size of a scoring model; size drives fusion weights."""

    model_id: str
    param_count: int
    kind: ModelKind

    def __post_init__(self) -> None:
        if not self.model_id:
            raise ValueError("model id must be non-empty")
        if self.param_count <= 0:
            raise ValueError(f"model {self.model_id!r} param count must be positive")


@dataclass(frozen=True)
class Embedding:
    """A dense vector tagged with the space it lives in.

    Vectors from different spaces are never compared; every consumer
    checks ``space_id`` before taking a similarity.
    """

    values: tuple[float, ...]
    space_id: str

    def __post_init__(self) -> None:
        if not self.values:
            raise ValueError("embedding must be non-empty")
        if any(not math.isfinite(v) for v in self.values):
            raise ValueError(f"embedding in space {self.space_id!r} has non-finite entries")

    @property
    def dim(self) -> int:
        return len(self.values)


class ImageSource(str, Enum):
    """Where an image came from."""

    RECALL = "recall"
    SYNTHESIS = "synthesis"


@dataclass(frozen=True)
class ImageRecord:
    """A stored image, identified by the SHA-256 of its bytes."""

    content_hash: str
    source: ImageSource
    provider_meta: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if len(self.content_hash) != 64:
            raise ValueError(f"content hash must be hex sha-256, got {self.content_hash!r}")


@dataclass(frozen=True)
class ImaginationSet:
    """The ranked images retained for one imagined text.

    Images are sorted by similarity descending; ties break on content
    hash ascending, so the selection is deterministic. The set may hold
    fewer than ``k`` images when the pool was small.
    """

    query_text: str
    images: tuple[ImageRecord, ...]
    similarities: tuple[float, ...]
    k: int
    pool_size_requested: tuple[int, int]

    def __post_init__(self) -> None:
        if self.k < 0:
            raise ValueError("k must be non-negative")
        if len(self.images) != len(self.similarities):
            raise ValueError("images and similarities length mismatch")
        if len(self.images) > self.k:
            raise ValueError(f"selected {len(self.images)} images but k={self.k}")
        if any(not math.isfinite(s) for s in self.similarities):
            raise ValueError("similarities must be finite")
        for earlier, later in zip(self.similarities, self.similarities[1:]):
            if later > earlier:
                raise ValueError("similarities must be non-increasing")

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "query_text": self.query_text,
            "images": [
                {
                    "content_hash": rec.content_hash,
                    "source": rec.source.value,
                    "provider_meta": dict(rec.provider_meta),
                }
                for rec in self.images
            ],
            "similarities": list(self.similarities),
            "k": self.k,
            "pool_size_requested": list(self.pool_size_requested),
        }

    @classmethod
    def from_json_dict(cls, obj: Mapping[str, Any]) -> "ImaginationSet":
        return cls(
            query_text=obj["query_text"],
            images=tuple(
                ImageRecord(
                    content_hash=rec["content_hash"],
                    source=ImageSource(rec["source"]),
                    provider_meta=dict(rec.get("provider_meta", {})),
                )
                for rec in obj["images"]
            ),
            similarities=tuple(obj["similarities"]),
            k=obj["k"],
            pool_size_requested=tuple(obj["pool_size_requested"]),
        )
