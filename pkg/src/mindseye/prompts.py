"""Prompt templates and deterministic rendering.

A template is a pattern with ``{PLACEHOLDER}`` slots plus the name of
the slot that carries the candidate answer. Rendering substitutes
instance fields and returns both the full text and the character span
of the answer substitution, which is what token-level scoring needs.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import TemplateError
from .types import TaskInstance, TaskKind

PLACEHOLDERS = frozenset({
    "SENTENCE", "TARGET_WORD", "SENSE_NAME", "QUESTION", "ANSWER",
    "CLASS_NAME", "SUBJ", "OBJ",
})

# Placeholders filled from the candidate rather than the query side.
CANDIDATE_PLACEHOLDERS = frozenset({"SENSE_NAME", "ANSWER", "CLASS_NAME", "OBJ"})

# Placeholders filled from the query text; TARGET_WORD comes from metadata.
_QUERY_PLACEHOLDERS = frozenset({"SENTENCE", "QUESTION", "SUBJ"})

_SLOT_RE = re.compile(r"\{([A-Z_]+)\}")


@dataclass(frozen=True)
class PromptTemplate:
    """A validated pattern with a designated answer slot."""

    name: str
    pattern: str
    answer_slot: str

    def __post_init__(self) -> None:
        slots = _SLOT_RE.findall(self.pattern)
        unknown = [s for s in slots if s not in PLACEHOLDERS]
        if unknown:
            raise TemplateError(
                f"template {self.name!r} uses unknown placeholders: {unknown}")
        if self.answer_slot not in PLACEHOLDERS:
            raise TemplateError(
                f"template {self.name!r} answer slot {self.answer_slot!r} is unknown")
        if slots.count(self.answer_slot) != 1:
            raise TemplateError(
                f"template {self.name!r} must contain the answer slot "
                f"{self.answer_slot!r} exactly once")

    @property
    def slots(self) -> tuple[str, ...]:
        return tuple(_SLOT_RE.findall(self.pattern))


def _substitution(slot: str, instance: TaskInstance, candidate_index: int,
                  template_name: str) -> str:
    if slot in _QUERY_PLACEHOLDERS:
        value = instance.query_text
    elif slot == "TARGET_WORD":
        value = instance.metadata.get("target_word", "")
        if not value:
            raise TemplateError(
                f"template {template_name!r} needs metadata key 'target_word' "
                f"on instance {instance.id!r}")
    elif slot in CANDIDATE_PLACEHOLDERS:
        value = instance.candidates[candidate_index].surface
    else:  # pragma: no cover - PLACEHOLDERS and the branches above agree
        raise TemplateError(f"unhandled placeholder {slot!r}")
    if not value:
        raise TemplateError(
            f"template {template_name!r} placeholder {slot!r} resolved to an "
            f"empty string on instance {instance.id!r}")
    return value


def render_prompt(template: PromptTemplate, instance: TaskInstance,
                  candidate_index: int) -> tuple[str, tuple[int, int]]:
    """Render a template for one candidate.

    Returns the full text and the half-open character span of the
    answer substitution. Rendering is a pure string operation: the same
    inputs always produce the same output, and two distinct candidate
    surfaces always produce distinct texts.
    """
    if not 0 <= candidate_index < len(instance.candidates):
        raise TemplateError(
            f"candidate index {candidate_index} out of range on {instance.id!r}")
    out: list[str] = []
    span: tuple[int, int] | None = None
    cursor = 0
    pos = 0
    for match in _SLOT_RE.finditer(template.pattern):
        literal = template.pattern[pos:match.start()]
        out.append(literal)
        cursor += len(literal)
        slot = match.group(1)
        value = _substitution(slot, instance, candidate_index, template.name)
        if slot == template.answer_slot:
            span = (cursor, cursor + len(value))
        out.append(value)
        cursor += len(value)
        pos = match.end()
    out.append(template.pattern[pos:])
    if span is None:  # pragma: no cover - template validation guarantees the slot
        raise TemplateError(f"template {template.name!r} answer slot never rendered")
    return "".join(out), span


# Full prompts for token-level scoring.
PROMPT_TEMPLATES: dict[TaskKind, PromptTemplate] = {
    TaskKind.WSD: PromptTemplate(
        "wsd-prompt",
        "{SENTENCE} The {TARGET_WORD} mentioned before means {SENSE_NAME}.",
        "SENSE_NAME"),
    TaskKind.SCIENCE_QA: PromptTemplate(
        "qa-prompt",
        "Question: {QUESTION} The answer is {ANSWER}.",
        "ANSWER"),
    TaskKind.TOPIC: PromptTemplate(
        "topic-prompt",
        "{SENTENCE} This example is {CLASS_NAME}.",
        "CLASS_NAME"),
}

# Hypothesis side for entailment scoring; the premise is the query text.
NLI_HYPOTHESIS_TEMPLATES: dict[TaskKind, PromptTemplate] = {
    TaskKind.WSD: PromptTemplate(
        "wsd-hypothesis",
        "The {TARGET_WORD} mentioned before means {SENSE_NAME}.",
        "SENSE_NAME"),
    TaskKind.SCIENCE_QA: PromptTemplate(
        "qa-hypothesis", "The answer is {ANSWER}.", "ANSWER"),
    TaskKind.TOPIC: PromptTemplate(
        "topic-hypothesis", "This example is {CLASS_NAME}.", "CLASS_NAME"),
}

# Candidate side for sentence-embedding scoring. Absent entries mean the
# candidate's imagination text is embedded as-is (a gloss or an answer
# is already a complete phrase; a bare topic label is not).
PAIR_CANDIDATE_TEMPLATES: dict[TaskKind, PromptTemplate] = {
    TaskKind.TOPIC: PromptTemplate(
        "topic-pair", "This example is {CLASS_NAME}.", "CLASS_NAME"),
}

# Candidate side for vision-text scoring, where it differs from the
# embedding pair above.
VISION_CANDIDATE_TEMPLATES: dict[TaskKind, PromptTemplate] = {
    TaskKind.TOPIC: PromptTemplate(
        "topic-vision", "A news image of {CLASS_NAME}.", "CLASS_NAME"),
}

# Property-probe patterns: seven paraphrases per relation, one instance
# per (subject, pattern).
PROBE_PATTERNS: dict[str, tuple[str, ...]] = {
    "color": (
        "{SUBJ} can be of color {OBJ}.",
        "{SUBJ} has color {OBJ}.",
        "The color of {SUBJ} can be {OBJ}.",
        "The color of the {SUBJ} is {OBJ}.",
        "{SUBJ} is {OBJ}.",
        "This {SUBJ} is {OBJ}.",
        "{SUBJ} is of color {OBJ}.",
    ),
    "shape": (
        "{SUBJ} can be shape of {OBJ}.",
        "{SUBJ} has shape of {OBJ}.",
        "{SUBJ} is of shape {OBJ}.",
        "The shape of {SUBJ} can be {OBJ}.",
        "The shape of the {SUBJ} is {OBJ}.",
        "{SUBJ} is {OBJ}.",
        "This {SUBJ} is {OBJ}.",
    ),
    "material": (
        "{SUBJ} is made of {OBJ}.",
        "{SUBJ} can be made of {OBJ}.",
        "{SUBJ} is made from {OBJ}.",
        "{SUBJ} can be made from {OBJ}.",
        "{SUBJ} is {OBJ}.",
        "This {SUBJ} is {OBJ}.",
        "{SUBJ} is made by using {OBJ}.",
    ),
}

PROBE_OBJECT_COUNTS = {"color": 12, "shape": 12, "material": 18}


def probe_template(relation: str, index: int) -> PromptTemplate:
    """The ``index``-th probe pattern for a relation, as a template."""
    try:
        patterns = PROBE_PATTERNS[relation]
    except KeyError:
        raise TemplateError(f"unknown probe relation {relation!r}") from None
    if not 0 <= index < len(patterns):
        raise TemplateError(
            f"probe template index {index} out of range for {relation!r}")
    return PromptTemplate(f"probe-{relation}-{index}", patterns[index], "OBJ")


def prompt_template_for(instance: TaskInstance) -> PromptTemplate:
    """The full-prompt template for an instance.

    Probe instances carry their pattern index in metadata; the other
    kinds use the fixed per-kind template.
    """
    if instance.task_kind is TaskKind.PROBE:
        relation = instance.metadata.get("relation", "")
        index = instance.metadata.get("template_index", "")
        if not relation or index == "":
            raise TemplateError(
                f"probe instance {instance.id!r} needs 'relation' and "
                f"'template_index' metadata")
        return probe_template(relation, int(index))
    return PROMPT_TEMPLATES[instance.task_kind]


def nli_hypothesis_template_for(instance: TaskInstance) -> PromptTemplate:
    """The hypothesis template for entailment scoring."""
    if instance.task_kind is TaskKind.PROBE:
        return prompt_template_for(instance)
    return NLI_HYPOTHESIS_TEMPLATES[instance.task_kind]


def candidate_pair_text(instance: TaskInstance, candidate_index: int,
                        template: PromptTemplate | None) -> str:
    """Candidate-side text for two-tower scoring.

    With no template the candidate's imagination text is used directly;
    with one, the rendered pattern is used.
    """
    if template is None:
        return instance.candidates[candidate_index].imagination_text
    return render_prompt(template, instance, candidate_index)[0]
