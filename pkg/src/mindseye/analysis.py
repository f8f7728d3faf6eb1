"""Cross-run analyses over saved reports.

Everything here recomputes from per-instance rows; no scoring backend
is touched except by the image-count sweep, which reuses a run's cached
pools and embeddings to re-rank under different budgets.
"""
from __future__ import annotations

import csv
import logging
from pathlib import Path
from typing import Any, Mapping, Sequence

from . import jsonutil
from .backends.protocol import Backend
from .errors import ConfigError
from .imagination import ImaginationResult, rank_and_select
from .metrics import accuracy, average_performance_gain, prediction_overlap
from .pipeline import PipelineRun, RunManifest, _fuse_lists
from .report import RunReport
from .scoring import predict
from .vision import score_instance_vision

log = logging.getLogger(__name__)


def stream_label(report_index: int, stream_id: str, multi: bool) -> str:
    return f"r{report_index}/{stream_id}" if multi else stream_id


def correct_id_sets(report: RunReport) -> dict[str, set[str]]:
    """Instance ids each stream got right."""
    out: dict[str, set[str]] = {}
    for row in report.rows:
        for stream, output in row.outputs.items():
            out.setdefault(stream, set())
            if output.prediction == row.gold:
                out[stream].add(row.instance_id)
    return out


def incorrect_id_sets(report: RunReport) -> dict[str, set[str]]:
    """Instance ids each stream got wrong."""
    out: dict[str, set[str]] = {}
    for row in report.rows:
        for stream, output in row.outputs.items():
            out.setdefault(stream, set())
            if output.prediction != row.gold:
                out[stream].add(row.instance_id)
    return out


def overlap_matrix(id_sets: Mapping[str, set[str]]
                   ) -> tuple[list[str], list[list[float]]]:
    """Pairwise overlap, rows first: entry [i][j] is the share of row
    stream i's set also present in column stream j's set."""
    labels = sorted(id_sets)
    matrix = [
        [prediction_overlap(id_sets[a], id_sets[b]) for b in labels]
        for a in labels
    ]
    return labels, matrix


def _merged_rows(reports: Sequence[RunReport]
                 ) -> tuple[dict[str, int], dict[str, dict[str, tuple[float, ...]]]]:
    """Merge reports over one dataset into (golds, stream -> id -> probs).

    All reports must cover the same instances with the same golds.
    """
    if not reports:
        raise ConfigError("no reports given")
    multi = len(reports) > 1
    golds: dict[str, int] = {}
    for row in reports[0].rows:
        golds[row.instance_id] = row.gold
    streams: dict[str, dict[str, tuple[float, ...]]] = {}
    for index, report in enumerate(reports):
        ids = {row.instance_id for row in report.rows}
        if ids != set(golds):
            raise ConfigError(
                f"report {index} covers a different instance set")
        for row in report.rows:
            if golds[row.instance_id] != row.gold:
                raise ConfigError(
                    f"reports disagree on gold for {row.instance_id!r}")
            for stream, output in row.outputs.items():
                label = stream_label(index, stream, multi)
                streams.setdefault(label, {})[row.instance_id] = output.probs
    return golds, streams


def pairwise_gain(reports: Sequence[RunReport], augmenter: str,
                  bases: Sequence[str], weight: float = 0.5
                  ) -> dict[str, Any]:
    """Average relative gain from ensembling one stream into others.

    For each base stream, the augmenter's probabilities are fused in at
    the given weight and the resulting accuracy is compared with the
    base's own. Stream names use the ``r<i>/<stream>`` form when more
    than one report is given.
    """
    golds, streams = _merged_rows(reports)
    if augmenter not in streams:
        raise ConfigError(f"unknown augmenter stream {augmenter!r}")
    order = sorted(golds)
    gold_list = [golds[i] for i in order]
    per_base = {}
    pairs = []
    for base in bases:
        if base not in streams:
            raise ConfigError(f"unknown base stream {base!r}")
        base_preds = [predict(streams[base][i]) for i in order]
        fused_preds = [
            predict(_fuse_lists(streams[base][i], streams[augmenter][i], weight))
            for i in order
        ]
        original = accuracy(base_preds, gold_list)
        ensembled = accuracy(fused_preds, gold_list)
        pairs.append((ensembled, original))
        per_base[base] = {
            "original": original,
            "ensembled": ensembled,
            "gain": (ensembled - original) / original,
        }
    return {
        "augmenter": augmenter,
        "weight": weight,
        "per_base": per_base,
        "average_gain": average_performance_gain(pairs),
    }


def expected_random_baseline(report: RunReport) -> float:
    """Closed-form accuracy of uniform guessing on the report's rows."""
    first_stream = sorted(report.rows[0].outputs)[0]
    total = sum(100.0 / len(row.outputs[first_stream].probs)
                for row in report.rows)
    return total / len(report.rows)


def _write_matrix_csv(path: Path, labels: list[str],
                      matrix: list[list[float]]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["stream", *labels])
        for label, row in zip(labels, matrix):
            writer.writerow([label, *[repr(jsonutil.round_float(v)) for v in row]])


def analyze(reports: Sequence[RunReport], out_dir: str | Path,
            include_incorrect: bool = False,
            gain: tuple[str, Sequence[str], float] | None = None
            ) -> dict[str, Any]:
    """Produce the cross-run analysis bundle.

    Writes the overlap matrix over correct predictions (optionally also
    over errors), combined aggregates, imagination source fractions,
    the expected random baseline, and, when requested, the pairwise
    ensemble-gain table. Returns the summary that was written.
    """
    if not reports:
        raise ConfigError("no reports given")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    multi = len(reports) > 1
    merged_correct: dict[str, set[str]] = {}
    for index, report in enumerate(reports):
        for stream, ids in correct_id_sets(report).items():
            merged_correct[stream_label(index, stream, multi)] = ids
    labels, matrix = overlap_matrix(merged_correct)
    _write_matrix_csv(out_dir / "overlap_correct.csv", labels, matrix)
    summary: dict[str, Any] = {
        "streams": labels,
        "overlap_correct": matrix,
        "random_baseline": [
            jsonutil.round_float(expected_random_baseline(r)) for r in reports
        ],
    }
    if include_incorrect:
        merged_incorrect: dict[str, set[str]] = {}
        for index, report in enumerate(reports):
            for stream, ids in incorrect_id_sets(report).items():
                merged_incorrect[stream_label(index, stream, multi)] = ids
        labels_i, matrix_i = overlap_matrix(merged_incorrect)
        _write_matrix_csv(out_dir / "overlap_incorrect.csv", labels_i, matrix_i)
        summary["overlap_incorrect"] = matrix_i
    with open(out_dir / "aggregates_combined.csv", "w", encoding="utf-8",
              newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["report", "stream", "metric", "value"])
        for index, report in enumerate(reports):
            for stream in sorted(report.aggregates):
                for metric in sorted(report.aggregates[stream]):
                    value = jsonutil.round_float(report.aggregates[stream][metric])
                    writer.writerow([f"r{index}", stream, metric, repr(value)])
    with open(out_dir / "source_fractions.csv", "w", encoding="utf-8",
              newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["report", "recall_fraction", "synthesis_fraction"])
        for index, report in enumerate(reports):
            stats = report.imagination_stats
            writer.writerow([
                f"r{index}",
                repr(jsonutil.round_float(stats.get("recall_fraction", 0.0))),
                repr(jsonutil.round_float(stats.get("synthesis_fraction", 0.0))),
            ])
    if gain is not None:
        augmenter, bases, weight = gain
        gain_summary = pairwise_gain(reports, augmenter, bases, weight)
        summary["pairwise_gain"] = gain_summary
        with open(out_dir / "pairwise_gain.csv", "w", encoding="utf-8",
                  newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["base", "original", "ensembled", "gain"])
            for base, entry in gain_summary["per_base"].items():
                writer.writerow([
                    base,
                    repr(jsonutil.round_float(entry["original"])),
                    repr(jsonutil.round_float(entry["ensembled"])),
                    repr(jsonutil.round_float(entry["gain"])),
                ])
    (out_dir / "summary.json").write_text(
        jsonutil.canonical_dumps(summary, indent=2) + "\n", "utf-8")
    return summary


def sweep_image_count(manifest: RunManifest, backends: Mapping[str, Backend],
                      counts: Sequence[int],
                      out_path: str | Path | None = None,
                      top_k: int | None = None
                      ) -> list[tuple[int, dict[str, float]]]:
    """Accuracy as a function of how many image candidates are available.

    Reuses the run's imagination pools and cached embeddings: for each
    count n the stored pools are cut to their first n images (acquisition
    order, recall before synthesis) and re-ranked, the vision stream is
    re-scored, and every ensemble is re-fused. No provider is called, so
    the sweep is cheap and deterministic. A count at or above the pool
    size reproduces the original run exactly. ``top_k`` overrides how
    many ranked images are kept per pool (a second sweep axis); the
    default is the run's own setting.
    """
    if not counts or any(c < 1 for c in counts):
        raise ConfigError("sweep counts must be positive")
    if top_k is None:
        top_k = manifest.imagination.top_k
    elif top_k < 1:
        raise ConfigError("top_k must be positive")
    pipeline_run = PipelineRun(manifest, backends)
    imagine_payload = pipeline_run.stage_imagine()
    score_payload = pipeline_run.stage_score()
    fuse_payload = pipeline_run.stage_fuse()
    pools = {
        text: ImaginationResult.from_json_dict(result)
        for text, result in imagine_payload["texts"].items()
    }
    golds = {i.id: i.gold for i in pipeline_run.instances}
    curve: list[tuple[int, dict[str, float]]] = []
    for count in counts:
        sets = {
            text: rank_and_select(text, result.pool[:count], top_k,
                                  pipeline_run._embedder,
                                  result.selected.pool_size_requested)
            for text, result in pools.items()
        }
        vision_probs = {}
        for instance in pipeline_run.instances:
            dist = score_instance_vision(
                instance, pipeline_run.direction, sets, pipeline_run._embedder,
                source=manifest.vision_model,
                candidate_template=pipeline_run._vision_candidate_template(instance))
            vision_probs[instance.id] = list(dist.probs)
        entry: dict[str, float] = {
            manifest.vision_model: accuracy(
                [predict(vision_probs[i]) for i in sorted(golds)],
                [golds[i] for i in sorted(golds)]),
        }
        for lm_entry in manifest.language_models:
            weight = fuse_payload["weights"][lm_entry.model_id]
            lm_probs = score_payload["streams"][lm_entry.model_id]["probs"]
            fused_preds = [
                predict(_fuse_lists(lm_probs[i], vision_probs[i], weight))
                for i in sorted(golds)
            ]
            entry[f"ens:{lm_entry.model_id}"] = accuracy(
                fused_preds, [golds[i] for i in sorted(golds)])
        curve.append((count, entry))
    if out_path is not None:
        out_path = Path(out_path)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        with open(out_path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["images", "stream", "accuracy"])
            for count, entry in curve:
                for stream in sorted(entry):
                    writer.writerow([count, stream,
                                     repr(jsonutil.round_float(entry[stream]))])
    return curve
