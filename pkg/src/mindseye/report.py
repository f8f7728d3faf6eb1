"""Run reports: per-instance outputs plus aggregate metrics.

A report is self-contained: every aggregate in it can be recomputed
from its per-instance rows alone, and ``verify`` checks exactly that.
Probabilities are rounded to canonical precision when rows are built,
so a report that is saved and reloaded is byte-identical and still
self-consistent.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

from . import jsonutil
from .metrics import (WordResults, accuracy, hits_at_1, spearman_rho,
                      word_averaged_metrics)
from .scoring import predict
from .types import TaskInstance, TaskKind

REPORT_SCHEMA = "zlavi/1"


@dataclass(frozen=True)
class StreamOutput:
    """One scorer's distribution and decision for one instance."""

    probs: tuple[float, ...]
    prediction: int
    normalized: bool = True


@dataclass(frozen=True)
class InstanceRow:
    """All outputs for one instance.

    ``group`` carries the ambiguous word for sense tasks and the
    relation for probe tasks, which is what grouped metrics need;
    ``gold_distribution`` is present for probe rows.
    """

    instance_id: str
    gold: int
    outputs: Mapping[str, StreamOutput]
    group: str | None = None
    gold_distribution: tuple[float, ...] | None = None


def build_row(instance: TaskInstance,
              stream_probs: Mapping[str, tuple[Sequence[float], bool]]
              ) -> InstanceRow:
    """Round each stream to canonical precision and take its argmax."""
    outputs = {}
    for stream_id, (probs, normalized) in stream_probs.items():
        rounded = tuple(jsonutil.round_float(p) for p in probs)
        outputs[stream_id] = StreamOutput(rounded, predict(rounded), normalized)
    group = None
    if instance.task_kind is TaskKind.WSD:
        group = instance.metadata.get("target_word")
    elif instance.task_kind is TaskKind.PROBE:
        group = instance.metadata.get("relation")
    return InstanceRow(
        instance_id=instance.id,
        gold=instance.gold,
        outputs=outputs,
        group=group,
        gold_distribution=instance.gold_distribution,
    )


def compute_aggregates(task_kind: TaskKind, rows: Sequence[InstanceRow]
                       ) -> dict[str, dict[str, float]]:
    """Aggregate metrics per stream, from rows alone.

    Accuracy is always present. Sense tasks add word-averaged accuracy
    and macro F1; probe tasks add mean rank correlation against the
    reference distribution and the percent of rows whose top choice
    matches the reference argmax.
    """
    if not rows:
        raise ValueError("cannot aggregate zero rows")
    stream_ids = sorted(rows[0].outputs)
    aggregates: dict[str, dict[str, float]] = {}
    for stream_id in stream_ids:
        preds = [row.outputs[stream_id].prediction for row in rows]
        golds = [row.gold for row in rows]
        entry = {"accuracy": accuracy(preds, golds)}
        if task_kind is TaskKind.WSD:
            by_word: dict[str, tuple[list[int], list[int], int]] = {}
            for row in rows:
                word = row.group or ""
                golds_w, preds_w, _ = by_word.setdefault(
                    word, ([], [], len(row.outputs[stream_id].probs)))
                golds_w.append(row.gold)
                preds_w.append(row.outputs[stream_id].prediction)
            grouped = {
                word: WordResults(tuple(g), tuple(p), n)
                for word, (g, p, n) in by_word.items()
            }
            word_acc, word_f1 = word_averaged_metrics(grouped)
            entry["word_accuracy"] = word_acc
            entry["word_f1"] = word_f1
        if task_kind is TaskKind.PROBE:
            rhos = []
            hits = []
            for row in rows:
                if row.gold_distribution is None:
                    raise ValueError(
                        f"probe row {row.instance_id!r} lacks a gold distribution")
                probs = row.outputs[stream_id].probs
                rhos.append(spearman_rho(probs, row.gold_distribution))
                hits.append(hits_at_1(probs, row.gold_distribution))
            entry["spearman_rho"] = sum(rhos) / len(rhos)
            entry["hits_at_1"] = 100.0 * sum(hits) / len(hits)
        aggregates[stream_id] = entry
    return aggregates


@dataclass(frozen=True)
class RunReport:
    """Everything one pipeline run produced."""

    run_id: str
    task_kind: TaskKind
    dataset: Mapping[str, Any]
    config: Mapping[str, Any]
    model_params: Mapping[str, int]
    ensemble_weights: Mapping[str, float]
    rows: tuple[InstanceRow, ...]
    aggregates: Mapping[str, Mapping[str, float]]
    imagination_stats: Mapping[str, float] = field(default_factory=dict)

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "schema": REPORT_SCHEMA,
            "run_id": self.run_id,
            "task_kind": self.task_kind.value,
            "dataset": dict(self.dataset),
            "config": dict(self.config),
            "model_params": dict(self.model_params),
            "ensemble_weights": dict(self.ensemble_weights),
            "imagination_stats": dict(self.imagination_stats),
            "rows": [
                {
                    "instance_id": row.instance_id,
                    "gold": row.gold,
                    "group": row.group,
                    "gold_distribution": (
                        None if row.gold_distribution is None
                        else list(row.gold_distribution)),
                    "outputs": {
                        stream: {
                            "probs": list(output.probs),
                            "prediction": output.prediction,
                            "normalized": output.normalized,
                        }
                        for stream, output in row.outputs.items()
                    },
                }
                for row in self.rows
            ],
            "aggregates": {s: dict(m) for s, m in self.aggregates.items()},
        }

    @classmethod
    def from_json_dict(cls, obj: Mapping[str, Any]) -> "RunReport":
        if obj.get("schema") != REPORT_SCHEMA:
            raise ValueError(f"unsupported report schema: {obj.get('schema')!r}")
        rows = tuple(
            InstanceRow(
                instance_id=row["instance_id"],
                gold=row["gold"],
                group=row.get("group"),
                gold_distribution=(
                    None if row.get("gold_distribution") is None
                    else tuple(row["gold_distribution"])),
                outputs={
                    stream: StreamOutput(
                        probs=tuple(output["probs"]),
                        prediction=output["prediction"],
                        normalized=output.get("normalized", True))
                    for stream, output in row["outputs"].items()
                },
            )
            for row in obj["rows"]
        )
        return cls(
            run_id=obj["run_id"],
            task_kind=TaskKind(obj["task_kind"]),
            dataset=dict(obj["dataset"]),
            config=dict(obj["config"]),
            model_params=dict(obj["model_params"]),
            ensemble_weights=dict(obj["ensemble_weights"]),
            rows=rows,
            aggregates={s: dict(m) for s, m in obj["aggregates"].items()},
            imagination_stats=dict(obj.get("imagination_stats", {})),
        )

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(jsonutil.canonical_dumps(self.to_json_dict(), indent=2) + "\n",
                        "utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "RunReport":
        import json
        return cls.from_json_dict(json.loads(Path(path).read_text("utf-8")))


def verify(report: RunReport) -> None:
    """Check the report's internal consistency; raises on any mismatch.

    Predictions must be the argmax of their stored probabilities and
    every aggregate must equal its recomputation from the rows, after
    canonical rounding.
    """
    for row in report.rows:
        for stream, output in row.outputs.items():
            if predict(output.probs) != output.prediction:
                raise ValueError(
                    f"row {row.instance_id!r} stream {stream!r}: stored "
                    f"prediction {output.prediction} is not the argmax")
    recomputed = compute_aggregates(report.task_kind, report.rows)
    stored = {s: dict(m) for s, m in report.aggregates.items()}
    rounded = {
        stream: {metric: jsonutil.round_float(value)
                 for metric, value in metrics.items()}
        for stream, metrics in recomputed.items()
    }
    if rounded != stored:
        raise ValueError(
            f"aggregates are not recomputable from rows: stored {stored!r}, "
            f"recomputed {rounded!r}")


def write_aggregates_csv(report: RunReport, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["stream", "metric", "value"])
        for stream in sorted(report.aggregates):
            for metric in sorted(report.aggregates[stream]):
                value = jsonutil.round_float(report.aggregates[stream][metric])
                writer.writerow([stream, metric, repr(value)])


def write_predictions_csv(report: RunReport, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["instance_id", "stream", "gold", "prediction", "correct"])
        for row in report.rows:
            for stream in sorted(row.outputs):
                output = row.outputs[stream]
                writer.writerow([row.instance_id, stream, row.gold,
                                 output.prediction, int(output.prediction == row.gold)])
