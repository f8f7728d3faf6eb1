"""Evaluation metrics and analysis arithmetic.

Everything here is pure and closed-form; accuracy-style numbers are on
a 0 to 100 scale, ratios and correlations are unscaled.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence, Set

import numpy as np

from . import jsonutil
from .types import TaskInstance


def accuracy(predictions: Sequence[int], golds: Sequence[int]) -> float:
    """Percent of predictions matching gold."""
    if len(predictions) != len(golds):
        raise ValueError("predictions and golds length mismatch")
    if not golds:
        raise ValueError("cannot take accuracy of zero instances")
    correct = sum(1 for p, g in zip(predictions, golds) if p == g)
    return 100.0 * correct / len(golds)


def macro_f1(predictions: Sequence[int], golds: Sequence[int],
             n_labels: int) -> float:
    """Unweighted mean of per-label F1 over the full label inventory.

    Labels that never occur in gold or predictions contribute an F1 of
    zero, so rare labels weigh as much as frequent ones.
    """
    if len(predictions) != len(golds):
        raise ValueError("predictions and golds length mismatch")
    if n_labels < 1:
        raise ValueError("need at least one label")
    f1_total = 0.0
    for label in range(n_labels):
        tp = sum(1 for p, g in zip(predictions, golds) if p == label and g == label)
        fp = sum(1 for p, g in zip(predictions, golds) if p == label and g != label)
        fn = sum(1 for p, g in zip(predictions, golds) if p != label and g == label)
        denom = 2 * tp + fp + fn
        f1_total += (2 * tp / denom) if denom else 0.0
    return 100.0 * f1_total / n_labels


@dataclass(frozen=True)
class WordResults:
    """Predictions for all instances of one ambiguous word."""

    golds: tuple[int, ...]
    predictions: tuple[int, ...]
    n_senses: int


def word_averaged_metrics(by_word: Mapping[str, WordResults]) -> tuple[float, float]:
    """Mean per-word accuracy and macro F1.

    Each word contributes equally regardless of how many test sentences
    it has, and its macro F1 runs over its full sense inventory.
    """
    if not by_word:
        raise ValueError("no words to evaluate")
    accs = []
    f1s = []
    for word in sorted(by_word):
        results = by_word[word]
        accs.append(accuracy(results.predictions, results.golds))
        f1s.append(macro_f1(results.predictions, results.golds, results.n_senses))
    return sum(accs) / len(accs), sum(f1s) / len(f1s)


def average_ranks(values: Sequence[float]) -> list[float]:
    """1-based ranks with ties sharing their average rank."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        mean_rank = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = mean_rank
        i = j + 1
    return ranks


def spearman_rho(a: Sequence[float], b: Sequence[float]) -> float:
    """Rank correlation with average-rank tie handling.

    Defined as the Pearson correlation of the rank vectors; when either
    side has no rank variance the correlation is taken as 0.
    """
    if len(a) != len(b):
        raise ValueError("sequences must have equal length")
    if len(a) < 2:
        raise ValueError("need at least two values")
    ranks_a = average_ranks(a)
    ranks_b = average_ranks(b)
    mean_a = sum(ranks_a) / len(ranks_a)
    mean_b = sum(ranks_b) / len(ranks_b)
    dev_a = [r - mean_a for r in ranks_a]
    dev_b = [r - mean_b for r in ranks_b]
    var_a = sum(d * d for d in dev_a)
    var_b = sum(d * d for d in dev_b)
    if var_a == 0.0 or var_b == 0.0:
        return 0.0
    cov = sum(x * y for x, y in zip(dev_a, dev_b))
    return cov / math.sqrt(var_a * var_b)


def hits_at_1(scores: Sequence[float], reference: Sequence[float]) -> bool:
    """Whether the top-scored item is the reference argmax.

    Both argmaxes break ties toward the lowest index.
    """
    from .scoring import predict
    if len(scores) != len(reference):
        raise ValueError("sequences must have equal length")
    return predict(scores) == predict(reference)


def prediction_overlap(correct_a: Set[str], correct_b: Set[str]) -> float:
    """Share of the first set also present in the second.

    Asymmetric on purpose: it reads "how much of what A got right did B
    also get right". An empty first set yields 0.
    """
    if not correct_a:
        return 0.0
    return len(correct_a & correct_b) / len(correct_a)


def performance_gain(ensembled: float, original: float) -> float:
    """Relative gain of an ensembled score over the original."""
    if original == 0.0:
        raise ValueError("original score must be non-zero")
    return (ensembled - original) / original


def average_performance_gain(pairs: Iterable[tuple[float, float]]) -> float:
    """Mean relative gain over (ensembled, original) pairs."""
    gains = [performance_gain(e, o) for e, o in pairs]
    if not gains:
        raise ValueError("no score pairs given")
    return sum(gains) / len(gains)


def relative_improvement(score: float, baseline: float) -> float:
    """Relative change of a score against a baseline score."""
    if baseline == 0.0:
        raise ValueError("baseline score must be non-zero")
    return (score - baseline) / baseline


def random_baseline(instances: Sequence[TaskInstance], trials: int,
                    seed: int) -> float:
    """Mean accuracy of uniform guessing, estimated over ``trials`` draws.

    Each instance draws from its own seeded stream, so the estimate is
    reproducible and the expectation per instance is 100 over its
    candidate count.
    """
    if not instances:
        raise ValueError("no instances given")
    if trials < 1:
        raise ValueError("need at least one trial")
    correct = 0
    for instance in instances:
        rng = np.random.default_rng(
            jsonutil.derive_seed(seed, "random-baseline", instance.id))
        draws = rng.integers(0, len(instance.candidates), size=trials)
        correct += int(np.sum(draws == instance.gold))
    return 100.0 * correct / (trials * len(instances))


def source_fractions(counts: Mapping[str, int]) -> dict[str, float]:
    """Share of selected images per source; zero total yields zeros."""
    total = sum(counts.values())
    if total == 0:
        return {source: 0.0 for source in counts}
    return {source: count / total for source, count in counts.items()}
