"""Shared fixtures: deterministic mock backends and tiny task sets."""
from __future__ import annotations

import pytest

from mindseye import datasets, pipeline
from mindseye.backends import BackendManifest, build_backends
from mindseye.fusion import EnsembleConfig
from mindseye.imagination import ImaginationConfig
from mindseye.types import Candidate, TaskInstance, TaskKind

MOCK_SEED = 7

STANDARD_BACKENDS = (
    dict(model_id="mock-lm", kind="lm_prompt", endpoint="mock",
         param_count=1_300_000_000, logprob_base="e"),
    dict(model_id="mock-nli", kind="lm_nli", endpoint="mock",
         param_count=355_000_000),
    dict(model_id="mock-embed", kind="lm_embed", endpoint="mock",
         param_count=110_000_000, dim=24, space_id="mock-sbert"),
    dict(model_id="mock-clip", kind="vision_text", endpoint="mock",
         param_count=150_000_000, dim=16, space_id="mock-clip"),
    dict(model_id="mock-search", kind="search", endpoint="mock"),
    dict(model_id="mock-gen", kind="generate", endpoint="mock"),
)


def mock_manifests(seed: int = MOCK_SEED) -> dict[str, BackendManifest]:
    out = {}
    for entry in STANDARD_BACKENDS:
        manifest = BackendManifest(options={"mock_seed": seed}, **entry)
        out[manifest.model_id] = manifest
    return out


def fresh_backends(seed: int = MOCK_SEED):
    return build_backends(mock_manifests(seed))


def make_instance(i: int, query: str, candidates, gold: int = 0,
                  kind: TaskKind = TaskKind.SCIENCE_QA,
                  name: str = "sciq", **metadata) -> TaskInstance:
    return TaskInstance(
        id=f"{name}.fixture.{i}",
        task_kind=kind,
        query_text=query,
        candidates=tuple(Candidate(surface=c) for c in candidates),
        gold=gold,
        metadata=metadata,
    )


# Raw situation-frame rows covering every filter outcome: single
# in-domain labels survive, multi-label / out-of-domain / unlabeled
# rows drop. Shared with the end-to-end acceptance checks.
SITUATION_ROWS = (
    {"id": "sit.1", "text": "Flooding cut the main road to town.",
     "labels": ["infra"]},
    {"id": "sit.2", "text": "Clinics ran out of antibiotics.",
     "labels": ["med"]},
    {"id": "sit.3", "text": "Armed gangs looted the grain market.",
     "labels": ["crimeviolence", "food"]},
    {"id": "sit.4", "text": "The council debated a new city flag.",
     "labels": ["out-of-domain"]},
    {"id": "sit.5", "text": "Wells were contaminated after the storm.",
     "labels": ["water"]},
    {"id": "sit.6", "text": "A short note with no annotation.",
     "labels": []},
    {"id": "sit.7", "text": "Families fled the coastal villages.",
     "labels": ["evac"]},
    {"id": "sit.8", "text": "Rebels seized the presidential palace.",
     "labels": ["regimechange", "out-of-domain"]},
)
SITUATION_SURVIVOR_IDS = ("sit.1", "sit.2", "sit.5", "sit.7")


def pytest_runtest_logreport(report):
    """One terminal line per acceptance check, printed pass or fail."""
    if report.when != "call" or "test_acceptance.py" not in report.nodeid:
        return
    name = report.nodeid.rsplit("::", 1)[-1].removeprefix("test_")
    outcome = "PASS" if report.passed else "FAIL"
    print(f"\n[ACCEPTANCE] {name}: {outcome}", flush=True)


SCIQ_FIXTURE = [
    ("which tool cuts wood", ("a saw", "a spoon", "a pillow", "a lamp"), 0),
    ("which animal lives in water", ("a fish", "a camel", "an eagle", "a goat"), 0),
    ("what melts in the sun", ("ice", "granite", "steel", "glass"), 0),
    ("which one flies", ("a kite", "a brick", "an anchor", "a boot"), 3),
    ("what do bees make", ("honey", "cheese", "bread", "paper"), 1),
    ("which is a fruit", ("an apple", "a carrot", "a potato", "an onion"), 2),
]


@pytest.fixture
def sciq_instances():
    return [make_instance(i, q, cands, gold)
            for i, (q, cands, gold) in enumerate(SCIQ_FIXTURE)]


@pytest.fixture
def small_run(tmp_path, sciq_instances):
    """A complete small run setup: data on disk, manifest, fresh backends."""
    data_path = tmp_path / "sciq.jsonl"
    datasets.write_canonical(sciq_instances, data_path)
    manifest = pipeline.RunManifest(
        dataset=datasets.DatasetManifest("sciq", "test", str(data_path)),
        language_models=(
            pipeline.LanguageModelEntry("mock-lm", "prompt"),
            pipeline.LanguageModelEntry("mock-nli", "nli"),
            pipeline.LanguageModelEntry("mock-embed", "embedding"),
        ),
        vision_model="mock-clip",
        imagination=ImaginationConfig(pool_recall=4, pool_synthesis=4, top_k=3),
        search_backend="mock-search",
        generate_backend="mock-gen",
        ensemble=EnsembleConfig(),
        seed=42,
        output_dir=str(tmp_path / "out"),
    )
    return manifest, fresh_backends()
