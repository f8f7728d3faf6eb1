"""Scoring candidates against imagined images.

A candidate's vision score is the mean text-image similarity between
the instance's text side and the imagination set on the other side;
softmax over candidates turns the scores into probabilities. When a set
is empty (nothing retrievable and synthesis disabled), that candidate
falls back to text-text similarity in the same embedding space, so the
vision stream always produces a full distribution.
"""
from __future__ import annotations

import logging
from typing import Mapping, Sequence

from .imagination import TextImageEmbedder
from .prompts import PromptTemplate, candidate_pair_text
from .scoring import cosine, softmax
from .types import (Embedding, ImaginationSet, ImaginationDirection,
                    ProbDistribution, TaskInstance)

log = logging.getLogger(__name__)


def mean_image_similarity(text_embedding: Embedding,
                          image_embeddings: Sequence[Embedding]) -> float:
    """Average cosine between one text and a set of image embeddings."""
    if not image_embeddings:
        raise ValueError("no image embeddings to score against")
    total = sum(cosine(text_embedding, image) for image in image_embeddings)
    return total / len(image_embeddings)


def _set_embeddings(image_set: ImaginationSet,
                    embedder: TextImageEmbedder) -> list[Embedding]:
    return [embedder.embed_image(record) for record in image_set.images]


def score_instance_vision(instance: TaskInstance,
                          direction: ImaginationDirection,
                          image_sets: Mapping[str, ImaginationSet],
                          embedder: TextImageEmbedder,
                          source: str,
                          candidate_template: PromptTemplate | None = None
                          ) -> ProbDistribution:
    """Vision probabilities for one instance.

    ``image_sets`` maps imagined text to its ranked set: keyed by
    candidate imagination text when candidates were imagined, by the
    query text when the query was. ``candidate_template`` renders the
    text side of each candidate where a bare label would be too little
    context.
    """
    scores: list[float] = []
    if direction is ImaginationDirection.IMAGINE_CANDIDATES:
        query_embedding = embedder.embed_text(instance.query_text)
        for index, candidate in enumerate(instance.candidates):
            image_set = image_sets.get(candidate.imagination_text)
            if image_set is not None and image_set.images:
                images = _set_embeddings(image_set, embedder)
                scores.append(mean_image_similarity(query_embedding, images))
            else:
                log.debug("no images for candidate %r of %s; text fallback",
                          candidate.imagination_text, instance.id)
                text = candidate_pair_text(instance, index, candidate_template)
                scores.append(cosine(query_embedding, embedder.embed_text(text)))
    else:
        image_set = image_sets.get(instance.query_text)
        query_images = (_set_embeddings(image_set, embedder)
                        if image_set is not None and image_set.images else None)
        if query_images is None:
            log.debug("no images for query of %s; text fallback", instance.id)
        query_embedding = (embedder.embed_text(instance.query_text)
                           if query_images is None else None)
        for index in range(len(instance.candidates)):
            text = candidate_pair_text(instance, index, candidate_template)
            candidate_embedding = embedder.embed_text(text)
            if query_images is not None:
                scores.append(mean_image_similarity(candidate_embedding, query_images))
            else:
                assert query_embedding is not None
                scores.append(cosine(candidate_embedding, query_embedding))
    return ProbDistribution(tuple(softmax(scores)), source)
