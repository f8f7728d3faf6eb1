"""Dataset loading, conversion to canonical form, and filters.

The pipeline only ever consumes the canonical JSON-lines form (one
instance per line, ``schema: "zlavi/1"``). Converters turn the public
release format of each supported dataset into that form; loading
validates counts and schema and reports the offending line on failure.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .errors import DatasetError
from .prompts import PROBE_OBJECT_COUNTS, PROBE_PATTERNS
from .types import Candidate, TaskInstance, TaskKind

DATASET_KINDS: dict[str, TaskKind] = {
    "coarsewsd20": TaskKind.WSD,
    "qasc": TaskKind.SCIENCE_QA,
    "sciq": TaskKind.SCIENCE_QA,
    "arc_easy": TaskKind.SCIENCE_QA,
    "arc_challenge": TaskKind.SCIENCE_QA,
    "agnews": TaskKind.TOPIC,
    "situation": TaskKind.TOPIC,
    "vicomte_color": TaskKind.PROBE,
    "vicomte_shape": TaskKind.PROBE,
    "vicomte_material": TaskKind.PROBE,
}

# Published test-split sizes, used as default count expectations.
EXPECTED_TEST_COUNTS = {
    "qasc": 926,
    "sciq": 1000,
    "arc_easy": 570,
    "arc_challenge": 299,
    "agnews": 7600,
    "situation": 1789,
}

AGNEWS_CLASSES = ("world", "sports", "business", "technology")

# Raw situation-frame codes in canonical candidate order, with the
# surfaces used in prompts. Multi-label rows and the out-of-domain
# label are filtered out before scoring.
SITUATION_CLASSES: tuple[tuple[str, str], ...] = (
    ("crimeviolence", "crime violence"),
    ("evac", "evacuation"),
    ("food", "food supply"),
    ("infra", "infrastructure"),
    ("med", "medical assistance"),
    ("regimechange", "regime change"),
    ("search", "search rescue"),
    ("shelter", "shelter"),
    ("terrorism", "terrorism"),
    ("utils", "utilities energy or sanitation"),
    ("water", "water supply"),
)
SITUATION_OOD_LABEL = "out-of-domain"

_SITUATION_INDEX = {code: i for i, (code, _) in enumerate(SITUATION_CLASSES)}


@dataclass(frozen=True)
class DatasetManifest:
    """Where a dataset lives and what it should contain."""

    name: str
    split: str
    path: str
    expected_count: int | None = None

    def __post_init__(self) -> None:
        if self.name not in DATASET_KINDS:
            raise DatasetError(f"unknown dataset name {self.name!r}")
        if not self.split:
            raise DatasetError("dataset split must be non-empty")

    @property
    def task_kind(self) -> TaskKind:
        return DATASET_KINDS[self.name]


def write_canonical(instances: Iterable[TaskInstance], path: str | Path) -> int:
    """Write instances as canonical JSON lines; returns the count."""
    from . import jsonutil
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for instance in instances:
            fh.write(jsonutil.canonical_dumps(instance.to_json_dict()))
            fh.write("\n")
            count += 1
    return count


def read_canonical(path: str | Path) -> list[TaskInstance]:
    """Read canonical JSON lines, reporting the line of any failure."""
    instances = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as err:
                raise DatasetError(f"invalid JSON: {err.msg}",
                                   path=str(path), line=line_no) from err
            try:
                instances.append(TaskInstance.from_json_dict(obj))
            except (KeyError, TypeError, ValueError) as err:
                raise DatasetError(f"invalid instance: {err}",
                                   path=str(path), line=line_no) from err
    return instances


def load(manifest: DatasetManifest) -> list[TaskInstance]:
    """Load a dataset per its manifest and validate it.

    Probe datasets may point at the raw per-subject file, which is
    expanded on the fly; everything else must be canonical.
    """
    path = Path(manifest.path)
    if not path.exists():
        raise DatasetError(f"dataset file not found: {path}")
    first = _first_json_line(path)
    if first is not None and "schema" not in first and manifest.task_kind is TaskKind.PROBE:
        instances = load_probe(manifest)
    else:
        instances = read_canonical(path)
    if manifest.expected_count is not None and len(instances) != manifest.expected_count:
        raise DatasetError(
            f"dataset {manifest.name}/{manifest.split} has {len(instances)} "
            f"instances, expected {manifest.expected_count}", path=str(path))
    expected_kind = manifest.task_kind
    for instance in instances:
        if instance.task_kind is not expected_kind:
            raise DatasetError(
                f"instance {instance.id!r} has kind {instance.task_kind.value}, "
                f"dataset {manifest.name} expects {expected_kind.value}")
    return instances


def _first_json_line(path: Path) -> dict | None:
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError:
                return None
            return obj if isinstance(obj, dict) else None
    return None


# -- word sense disambiguation ------------------------------------------


def convert_coarsewsd20(root: str | Path, split: str = "test",
                        definitions: Mapping[str, str] | None = None,
                        words: Sequence[str] | None = None) -> list[TaskInstance]:
    """Convert a CoarseWSD-20-style release directory.

    Each word directory holds ``classes_map.txt`` (JSON sense index ->
    sense name), ``<split>.data.txt`` (``target_index<TAB>sentence``)
    and ``<split>.gold.txt`` (sense index per line). ``definitions``
    optionally maps sense names to glosses, which become the texts to
    imagine; without one, the humanized sense name is imagined.
    """
    root = Path(root)
    definitions = definitions or {}
    if words is None:
        words = sorted(p.name for p in root.iterdir() if p.is_dir())
    if not words:
        raise DatasetError(f"no word directories under {root}")
    instances: list[TaskInstance] = []
    for word in words:
        word_dir = root / word
        classes_path = word_dir / "classes_map.txt"
        try:
            classes = json.loads(classes_path.read_text("utf-8"))
        except (OSError, json.JSONDecodeError) as err:
            raise DatasetError(f"cannot read sense map: {err}",
                               path=str(classes_path)) from err
        senses = [classes[str(i)] for i in range(len(classes))]
        candidates = tuple(
            Candidate(surface=sense.replace("_", " "),
                      imagination_text=definitions.get(sense, ""))
            for sense in senses)
        data_path = word_dir / f"{split}.data.txt"
        gold_path = word_dir / f"{split}.gold.txt"
        data_lines = _read_lines(data_path)
        gold_lines = _read_lines(gold_path)
        if len(data_lines) != len(gold_lines):
            raise DatasetError(
                f"{word}: {len(data_lines)} sentences but {len(gold_lines)} labels",
                path=str(data_path))
        for line_no, (data, gold) in enumerate(zip(data_lines, gold_lines), start=1):
            try:
                index_str, sentence = data.split("\t", 1)
                target_index = int(index_str)
            except ValueError as err:
                raise DatasetError(f"malformed data line: {data!r}",
                                   path=str(data_path), line=line_no) from err
            try:
                gold_index = int(gold)
            except ValueError as err:
                raise DatasetError(f"malformed gold label: {gold!r}",
                                   path=str(gold_path), line=line_no) from err
            if not 0 <= gold_index < len(candidates):
                raise DatasetError(f"gold sense {gold_index} out of range",
                                   path=str(gold_path), line=line_no)
            instances.append(TaskInstance(
                id=f"coarsewsd20.{word}.{split}.{line_no}",
                task_kind=TaskKind.WSD,
                query_text=sentence,
                candidates=candidates,
                gold=gold_index,
                metadata={"target_word": word, "target_index": str(target_index)},
            ))
    return instances


def _read_lines(path: Path) -> list[str]:
    try:
        return Path(path).read_text("utf-8").splitlines()
    except OSError as err:
        raise DatasetError(f"cannot read {path}: {err}", path=str(path)) from err


# -- science question answering -----------------------------------------


def convert_arc_style(path: str | Path, dataset_name: str,
                      split: str = "test") -> list[TaskInstance]:
    """Convert QASC/ARC-style JSON lines.

    Rows look like ``{"id", "question": {"stem", "choices": [{"label",
    "text"}]}, "answerKey"}``; choice order is preserved.
    """
    instances = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
                stem = row["question"]["stem"]
                choices = row["question"]["choices"]
                labels = [c["label"] for c in choices]
                gold = labels.index(row["answerKey"])
                candidates = tuple(Candidate(surface=c["text"]) for c in choices)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as err:
                raise DatasetError(f"malformed question row: {err}",
                                   path=str(path), line=line_no) from err
            instances.append(TaskInstance(
                id=f"{dataset_name}.{split}.{row.get('id', line_no)}",
                task_kind=TaskKind.SCIENCE_QA,
                query_text=stem,
                candidates=candidates,
                gold=gold,
            ))
    return instances


def convert_sciq(path: str | Path, split: str = "test") -> list[TaskInstance]:
    """Convert a SciQ-style JSON array.

    Each entry holds ``question``, ``correct_answer`` and three
    distractors. Options are ordered alphabetically so the gold
    position carries no signal.
    """
    try:
        rows = json.loads(Path(path).read_text("utf-8"))
    except (OSError, json.JSONDecodeError) as err:
        raise DatasetError(f"cannot read sciq file: {err}", path=str(path)) from err
    instances = []
    for i, row in enumerate(rows, start=1):
        try:
            options = sorted([row["correct_answer"], row["distractor1"],
                              row["distractor2"], row["distractor3"]])
            gold = options.index(row["correct_answer"])
            question = row["question"]
        except (KeyError, TypeError) as err:
            raise DatasetError(f"malformed sciq row: {err}",
                               path=str(path), line=i) from err
        instances.append(TaskInstance(
            id=f"sciq.{split}.{i}",
            task_kind=TaskKind.SCIENCE_QA,
            query_text=question,
            candidates=tuple(Candidate(surface=o) for o in options),
            gold=gold,
        ))
    return instances


# -- topic classification -----------------------------------------------


def convert_agnews(path: str | Path, split: str = "test") -> list[TaskInstance]:
    """Convert AG-News CSV rows (class index, title, description)."""
    candidates = tuple(Candidate(surface=c) for c in AGNEWS_CLASSES)
    instances = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for line_no, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            try:
                class_index = int(row[0]) - 1
                title, description = row[1], row[2]
            except (IndexError, ValueError) as err:
                raise DatasetError(f"malformed csv row: {err}",
                                   path=str(path), line=line_no) from err
            if not 0 <= class_index < len(AGNEWS_CLASSES):
                raise DatasetError(f"class index {row[0]!r} out of range",
                                   path=str(path), line=line_no)
            instances.append(TaskInstance(
                id=f"agnews.{split}.{line_no}",
                task_kind=TaskKind.TOPIC,
                query_text=f"{title} {description}".strip(),
                candidates=candidates,
                gold=class_index,
            ))
    return instances


def filter_situation_rows(rows: Sequence[Mapping[str, Any]]
                          ) -> tuple[list[Mapping[str, Any]], list[Mapping[str, Any]]]:
    """Split raw situation rows into (kept, dropped).

    A row survives only with exactly one label that is a known
    in-domain situation type; multi-label and out-of-domain rows drop.
    """
    kept, dropped = [], []
    for row in rows:
        labels = row.get("labels", [])
        if len(labels) == 1 and labels[0] in _SITUATION_INDEX:
            kept.append(row)
        else:
            dropped.append(row)
    return kept, dropped


def convert_situation(path: str | Path, split: str = "test") -> list[TaskInstance]:
    """Convert raw situation-frame JSON lines, applying the label filter.

    Rows look like ``{"id"?, "text", "labels": [code, ...]}`` with codes
    from ``SITUATION_CLASSES`` or the out-of-domain marker.
    """
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as err:
                raise DatasetError(f"invalid JSON: {err.msg}",
                                   path=str(path), line=line_no) from err
            for label in row.get("labels", []):
                if label != SITUATION_OOD_LABEL and label not in _SITUATION_INDEX:
                    raise DatasetError(f"unknown situation label {label!r}",
                                       path=str(path), line=line_no)
            row.setdefault("id", f"situation.{split}.{line_no}")
            rows.append(row)
    kept, _ = filter_situation_rows(rows)
    candidates = tuple(Candidate(surface=surface) for _, surface in SITUATION_CLASSES)
    return [
        TaskInstance(
            id=str(row["id"]),
            task_kind=TaskKind.TOPIC,
            query_text=row["text"],
            candidates=candidates,
            gold=_SITUATION_INDEX[row["labels"][0]],
        )
        for row in kept
    ]


# -- property probes ----------------------------------------------------


def load_probe(manifest: DatasetManifest) -> list[TaskInstance]:
    """Expand a raw per-subject probe file into canonical instances.

    The raw file holds one ``{"subject", "distribution": {object:
    weight}}`` row per subject. The candidate vocabulary is the sorted
    union of objects, validated against the relation's expected size,
    and each subject expands into one instance per prompt pattern with
    the normalized distribution as its reference.
    """
    relation = manifest.name.removeprefix("vicomte_")
    if relation not in PROBE_PATTERNS:
        raise DatasetError(f"dataset {manifest.name!r} is not a probe dataset")
    path = Path(manifest.path)
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
                subject = row["subject"]
                distribution = row["distribution"]
            except (json.JSONDecodeError, KeyError, TypeError) as err:
                raise DatasetError(f"malformed probe row: {err}",
                                   path=str(path), line=line_no) from err
            if not distribution:
                raise DatasetError(f"subject {subject!r} has an empty distribution",
                                   path=str(path), line=line_no)
            rows.append((subject, distribution))
    vocabulary = sorted({obj for _, dist in rows for obj in dist})
    expected_vocab = PROBE_OBJECT_COUNTS[relation]
    if len(vocabulary) != expected_vocab:
        raise DatasetError(
            f"{relation} probe vocabulary has {len(vocabulary)} objects, "
            f"expected {expected_vocab}", path=str(path))
    candidates = tuple(Candidate(surface=obj) for obj in vocabulary)
    index = {obj: i for i, obj in enumerate(vocabulary)}
    instances = []
    for subject, distribution in rows:
        weights = [0.0] * len(vocabulary)
        for obj, weight in distribution.items():
            if weight < 0:
                raise DatasetError(f"negative weight for {subject!r}/{obj!r}",
                                   path=str(path))
            weights[index[obj]] = float(weight)
        total = sum(weights)
        if total == 0:
            raise DatasetError(f"subject {subject!r} has zero total weight",
                               path=str(path))
        normalized = tuple(w / total for w in weights)
        gold = max(range(len(normalized)),
                   key=lambda i: (normalized[i], -i))
        for template_index in range(len(PROBE_PATTERNS[relation])):
            instances.append(TaskInstance(
                id=f"{manifest.name}.{subject}.{template_index}",
                task_kind=TaskKind.PROBE,
                query_text=subject,
                candidates=candidates,
                gold=gold,
                gold_distribution=normalized,
                metadata={"relation": relation,
                          "template_index": str(template_index)},
            ))
    return instances
