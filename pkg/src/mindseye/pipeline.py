"""The staged pipeline: imagine, embed, score, fuse, evaluate.

Each stage writes a checkpoint keyed by a hash of everything that can
change its output; a rerun loads any stage whose hash matches instead
of recomputing it. Checkpoints round-trip through canonical JSON before
use, so a stage's consumers see identical values whether the stage ran
just now or in an earlier process.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

from . import datasets, jsonutil, metrics, prompts, report as report_mod
from .backends import (Backend, BackendManifest, CachingBackend, build_backends,
                       load_manifests)
from .errors import ConfigError
from .fusion import EnsembleConfig, fuse
from .imagination import (ImageStore, ImaginationConfig, ImaginationResult,
                          Imaginer, TextImageEmbedder)
from .scoring import score_nli, score_prompt_lm, softmax
from .types import (Embedding, ImageRecord, ImaginationDirection, TaskInstance,
                    TaskKind, default_direction)
from .vision import score_instance_vision

log = logging.getLogger(__name__)

STAGES = ("imagine", "embed", "score", "fuse", "evaluate")
STRATEGIES = ("prompt", "nli", "embedding")
_STRATEGY_KIND = {"prompt": "lm_prompt", "nli": "lm_nli", "embedding": "lm_embed"}


@dataclass(frozen=True)
class LanguageModelEntry:
    """One language scorer participating in a run."""

    model_id: str
    strategy: str

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ConfigError(
                f"model {self.model_id!r} has unknown strategy {self.strategy!r}")


@dataclass(frozen=True)
class RunManifest:
    """Everything a run needs, minus the machines it runs against."""

    dataset: datasets.DatasetManifest
    language_models: tuple[LanguageModelEntry, ...]
    vision_model: str
    imagination: ImaginationConfig = field(default_factory=ImaginationConfig)
    search_backend: str | None = None
    generate_backend: str | None = None
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    seed: int = 0
    direction: ImaginationDirection | None = None
    renormalize_nli: bool = False
    output_dir: str = "out"
    cache_dir: str | None = None

    def __post_init__(self) -> None:
        if not self.language_models:
            raise ConfigError("a run needs at least one language model")
        ids = [entry.model_id for entry in self.language_models]
        if len(set(ids)) != len(ids):
            raise ConfigError("language model ids must be unique")
        if self.vision_model in ids:
            raise ConfigError("the vision model cannot double as a language model")

    def resolved_cache_dir(self) -> Path:
        return Path(self.cache_dir) if self.cache_dir else Path(self.output_dir) / "cache"

    def resolved_direction(self, kind: TaskKind) -> ImaginationDirection:
        return self.direction or default_direction(kind)

    def semantic_dict(self) -> dict[str, Any]:
        """The run configuration minus filesystem locations.

        This is what stage hashes and report snapshots are built from,
        so moving inputs or outputs around never invalidates anything.
        """
        return {
            "dataset": {
                "name": self.dataset.name,
                "split": self.dataset.split,
                "expected_count": self.dataset.expected_count,
            },
            "language_models": [
                {"model_id": e.model_id, "strategy": e.strategy}
                for e in self.language_models
            ],
            "vision_model": self.vision_model,
            "imagination": {
                "sources": list(self.imagination.sources),
                "pool_recall": self.imagination.pool_recall,
                "pool_synthesis": self.imagination.pool_synthesis,
                "top_k": self.imagination.top_k,
            },
            "search_backend": self.search_backend,
            "generate_backend": self.generate_backend,
            "ensemble": {
                "mode": self.ensemble.mode,
                "fixed_weight": self.ensemble.fixed_weight,
            },
            "seed": self.seed,
            "direction": None if self.direction is None else self.direction.value,
            "renormalize_nli": self.renormalize_nli,
        }

    @classmethod
    def from_json_dict(cls, obj: Mapping[str, Any]) -> "RunManifest":
        try:
            dataset = datasets.DatasetManifest(
                name=obj["dataset"]["name"],
                split=obj["dataset"]["split"],
                path=obj["dataset"].get("path", ""),
                expected_count=obj["dataset"].get("expected_count"),
            )
            imagination_obj = obj.get("imagination", {})
            imagination = ImaginationConfig(
                sources=tuple(imagination_obj.get("sources",
                                                  ("recall", "synthesis"))),
                pool_recall=imagination_obj.get("pool_recall", 100),
                pool_synthesis=imagination_obj.get("pool_synthesis", 100),
                top_k=imagination_obj.get("top_k", 10),
                parallelism=imagination_obj.get("parallelism", 8),
            )
            ensemble_obj = obj.get("ensemble", {})
            ensemble = EnsembleConfig(
                mode=ensemble_obj.get("mode", "sigmoid_param_ratio"),
                fixed_weight=ensemble_obj.get("fixed_weight", 0.5),
            )
            direction = obj.get("direction")
            return cls(
                dataset=dataset,
                language_models=tuple(
                    LanguageModelEntry(e["model_id"], e["strategy"])
                    for e in obj["language_models"]
                ),
                vision_model=obj["vision_model"],
                imagination=imagination,
                search_backend=obj.get("search_backend"),
                generate_backend=obj.get("generate_backend"),
                ensemble=ensemble,
                seed=obj.get("seed", 0),
                direction=None if direction is None else ImaginationDirection(direction),
                renormalize_nli=obj.get("renormalize_nli", False),
                output_dir=obj.get("output_dir", "out"),
                cache_dir=obj.get("cache_dir"),
            )
        except (KeyError, TypeError) as err:
            raise ConfigError(f"malformed run manifest: {err}") from err

    @classmethod
    def load(cls, path: str | Path) -> "RunManifest":
        try:
            return cls.from_json_dict(json.loads(Path(path).read_text("utf-8")))
        except (OSError, json.JSONDecodeError) as err:
            raise ConfigError(f"cannot read run manifest {path}: {err}") from err


def validate_backends(manifest: RunManifest,
                      backends: Mapping[str, Backend]) -> None:
    """Fail fast if the manifest references missing or mismatched backends."""

    def expect(model_id: str, kind: str) -> None:
        backend = backends.get(model_id)
        if backend is None:
            raise ConfigError(f"manifest references unknown backend {model_id!r}")
        if backend.manifest.kind != kind:
            raise ConfigError(
                f"backend {model_id!r} has kind {backend.manifest.kind!r}, "
                f"needed {kind!r}")

    for entry in manifest.language_models:
        expect(entry.model_id, _STRATEGY_KIND[entry.strategy])
    expect(manifest.vision_model, "vision_text")
    if "recall" in manifest.imagination.sources:
        if manifest.search_backend is None:
            raise ConfigError("recall imagination needs a search backend")
        expect(manifest.search_backend, "search")
    if "synthesis" in manifest.imagination.sources:
        if manifest.generate_backend is None:
            raise ConfigError("synthesis imagination needs a generate backend")
        expect(manifest.generate_backend, "generate")


class _CachedEmbedder(TextImageEmbedder):
    """Adapter giving ranking and scoring their two embedding calls."""

    def __init__(self, backend: CachingBackend, store: ImageStore) -> None:
        self._backend = backend
        self._store = store

    def embed_text(self, text: str) -> Embedding:
        return self._backend.text_embedding(text)

    def embed_image(self, record: ImageRecord) -> Embedding:
        return self._backend.image_embedding(
            record.content_hash, self._store.loader(record.content_hash))


class _Stages:
    """Checkpointed execution of named stages.

    A checkpoint is loaded only while every earlier stage also loaded
    from its checkpoint: once any stage recomputes, everything after it
    recomputes too, so a deleted checkpoint invalidates exactly its own
    stage and the stages downstream of it.
    """

    def __init__(self, stages_dir: Path) -> None:
        self.stages_dir = stages_dir
        self.executed: list[str] = []
        self._chain_broken = False

    def path(self, name: str, input_hash: str) -> Path:
        return self.stages_dir / f"{name}-{input_hash}.json"

    def run(self, name: str, input_hash: str,
            compute: Callable[[], dict]) -> dict:
        path = self.path(name, input_hash)
        if path.exists() and not self._chain_broken:
            log.info("stage %s: checkpoint hit (%s)", name, input_hash[:12])
            return json.loads(path.read_text("utf-8"))
        log.info("stage %s: computing", name)
        self._chain_broken = True
        self.executed.append(name)
        payload = jsonutil.canonical_dumps(compute())
        self.stages_dir.mkdir(parents=True, exist_ok=True)
        path.write_text(payload, "utf-8")
        return json.loads(payload)


class PipelineRun:
    """One run wired to its backends; drives the stages in order."""

    def __init__(self, manifest: RunManifest,
                 backends: Mapping[str, Backend]) -> None:
        validate_backends(manifest, backends)
        self.manifest = manifest
        self.backends = backends
        self.output_dir = Path(manifest.output_dir)
        cache_dir = manifest.resolved_cache_dir()
        self.store = ImageStore(cache_dir / "images")
        self.caching: dict[str, CachingBackend] = {}
        for entry in manifest.language_models:
            self.caching[entry.model_id] = CachingBackend(
                backends[entry.model_id], cache_dir)
        self.caching[manifest.vision_model] = CachingBackend(
            backends[manifest.vision_model], cache_dir)
        self.stages = _Stages(self.output_dir / "stages")
        self.instances: list[TaskInstance] = datasets.load(manifest.dataset)
        self.task_kind = manifest.dataset.task_kind
        self.direction = manifest.resolved_direction(self.task_kind)
        self.instances_hash = jsonutil.stable_hash(
            [instance.to_json_dict() for instance in self.instances])
        self._embedder = _CachedEmbedder(
            self.caching[manifest.vision_model], self.store)
        # Stage payloads computed or loaded in this process; re-entrant
        # stage calls must not consult checkpoints a second time.
        self._payloads: dict[str, dict] = {}

    # -- imagined texts --------------------------------------------------

    def imagined_texts(self) -> list[str]:
        """Unique texts to imagine, in first-occurrence order."""
        seen: set[str] = set()
        texts: list[str] = []
        for instance in self.instances:
            if self.direction is ImaginationDirection.IMAGINE_CANDIDATES:
                batch = [c.imagination_text for c in instance.candidates]
            else:
                batch = [instance.query_text]
            for text in batch:
                if text not in seen:
                    seen.add(text)
                    texts.append(text)
        return texts

    # -- stage hashes ----------------------------------------------------

    def _hash_imagine(self) -> str:
        return jsonutil.stable_hash({
            "stage": "imagine",
            "instances": self.instances_hash,
            "direction": self.direction.value,
            "imagination": self.manifest.imagination.config_hash(),
            "vision_model": self.manifest.vision_model,
            "search_backend": self.manifest.search_backend,
            "generate_backend": self.manifest.generate_backend,
            "seed": self.manifest.seed,
        })

    def _hash_embed(self, imagine_hash: str) -> str:
        return jsonutil.stable_hash({
            "stage": "embed",
            "imagine": imagine_hash,
            "language_models": [
                {"model_id": e.model_id, "strategy": e.strategy}
                for e in self.manifest.language_models
            ],
        })

    def _hash_score(self, embed_hash: str) -> str:
        return jsonutil.stable_hash({
            "stage": "score",
            "embed": embed_hash,
            "renormalize_nli": self.manifest.renormalize_nli,
        })

    def _hash_fuse(self, score_hash: str) -> str:
        return jsonutil.stable_hash({
            "stage": "fuse",
            "score": score_hash,
            "ensemble": {
                "mode": self.manifest.ensemble.mode,
                "fixed_weight": self.manifest.ensemble.fixed_weight,
            },
            "params": self._model_params(),
        })

    def _hash_evaluate(self, fuse_hash: str) -> str:
        return jsonutil.stable_hash({"stage": "evaluate", "fuse": fuse_hash})

    def _model_params(self) -> dict[str, int]:
        params = {}
        for entry in self.manifest.language_models:
            spec = self.backends[entry.model_id].manifest.model_spec()
            params[entry.model_id] = spec.param_count
        vision_spec = self.backends[self.manifest.vision_model].manifest.model_spec()
        params[self.manifest.vision_model] = vision_spec.param_count
        return params

    # -- stages ----------------------------------------------------------

    def stage_imagine(self) -> dict:
        if "imagine" in self._payloads:
            return self._payloads["imagine"]
        imagine_hash = self._hash_imagine()

        def compute() -> dict:
            manifest = self.manifest
            imaginer = Imaginer(
                config=manifest.imagination,
                store=self.store,
                cache_dir=manifest.resolved_cache_dir() / "imagine",
                embedder=self._embedder,
                search_backend=(self.backends[manifest.search_backend]
                                if manifest.search_backend else None),
                generate_backend=(self.backends[manifest.generate_backend]
                                  if manifest.generate_backend else None),
                run_seed=manifest.seed,
            )
            results = {}
            for text in self.imagined_texts():
                results[text] = imaginer.imagine(text).to_json_dict()
            self._save_caches()
            return {"direction": self.direction.value, "texts": results}

        payload = self.stages.run("imagine", imagine_hash, compute)
        self._payloads["imagine"] = payload
        return payload

    def _vision_candidate_template(self, instance: TaskInstance):
        if instance.task_kind is TaskKind.PROBE:
            return None
        return prompts.VISION_CANDIDATE_TEMPLATES.get(instance.task_kind)

    def _pair_candidate_template(self, instance: TaskInstance):
        if instance.task_kind is TaskKind.PROBE:
            return prompts.prompt_template_for(instance)
        return prompts.PAIR_CANDIDATE_TEMPLATES.get(instance.task_kind)

    def stage_embed(self) -> dict:
        """Warm every text embedding the score stage will need."""
        if "embed" in self._payloads:
            return self._payloads["embed"]
        self.stage_imagine()
        embed_hash = self._hash_embed(self._hash_imagine())

        def compute() -> dict:
            # The vision stream embeds the query and the candidate texts
            # regardless of direction: one side faces the images, the
            # other is the text fallback for empty sets.
            vision_texts: list[str] = []
            for instance in self.instances:
                template = self._vision_candidate_template(instance)
                vision_texts.append(instance.query_text)
                for i in range(len(instance.candidates)):
                    vision_texts.append(
                        prompts.candidate_pair_text(instance, i, template))
            counts = {}
            vision_backend = self.caching[self.manifest.vision_model]
            vision_backend.text_embeddings(_unique(vision_texts))
            counts[self.manifest.vision_model] = len(_unique(vision_texts))
            for entry in self.manifest.language_models:
                if entry.strategy != "embedding":
                    continue
                texts = []
                for instance in self.instances:
                    texts.append(instance.query_text)
                    template = self._pair_candidate_template(instance)
                    for i in range(len(instance.candidates)):
                        texts.append(
                            prompts.candidate_pair_text(instance, i, template))
                backend = self.caching[entry.model_id]
                backend.text_embeddings(_unique(texts))
                counts[entry.model_id] = len(_unique(texts))
            self._save_caches()
            return {"embedded_text_counts": counts}

        payload = self.stages.run("embed", embed_hash, compute)
        self._payloads["embed"] = payload
        return payload

    def stage_score(self) -> dict:
        if "score" in self._payloads:
            return self._payloads["score"]
        self.stage_embed()
        score_hash = self._hash_score(self._hash_embed(self._hash_imagine()))

        def compute() -> dict:
            imagine_payload = self.stage_imagine()
            sets = {
                text: ImaginationResult.from_json_dict(result).selected
                for text, result in imagine_payload["texts"].items()
            }
            streams: dict[str, dict] = {}
            for entry in self.manifest.language_models:
                backend = self.caching[entry.model_id]
                if entry.strategy == "prompt":
                    probs, normalized = self._score_prompt(backend), True
                elif entry.strategy == "nli":
                    probs, normalized = self._score_nli(backend)
                else:
                    probs, normalized = self._score_pairs(backend), True
                streams[entry.model_id] = {"normalized": normalized, "probs": probs}
            vision_probs = {}
            for instance in self.instances:
                dist = score_instance_vision(
                    instance, self.direction, sets, self._embedder,
                    source=self.manifest.vision_model,
                    candidate_template=self._vision_candidate_template(instance))
                vision_probs[instance.id] = list(dist.probs)
            streams[self.manifest.vision_model] = {
                "normalized": True, "probs": vision_probs}
            self._save_caches()
            return {"streams": streams}

        payload = self.stages.run("score", score_hash, compute)
        self._payloads["score"] = payload
        return payload

    def _score_prompt(self, backend: CachingBackend) -> dict[str, list[float]]:
        out = {}
        for instance in self.instances:
            template = prompts.prompt_template_for(instance)
            raw = []
            for i in range(len(instance.candidates)):
                full_text, span = prompts.render_prompt(template, instance, i)
                raw.append(score_prompt_lm(backend.logprobs(full_text, span)))
            out[instance.id] = softmax(raw)
        return out

    def _score_nli(self, backend: CachingBackend
                   ) -> tuple[dict[str, list[float]], bool]:
        out = {}
        for instance in self.instances:
            template = prompts.nli_hypothesis_template_for(instance)
            entailment = []
            for i in range(len(instance.candidates)):
                hypothesis, _ = prompts.render_prompt(template, instance, i)
                entailment.append(backend.nli(instance.query_text, hypothesis))
            dist = score_nli(entailment, source=backend.backend_id,
                             renormalize=self.manifest.renormalize_nli)
            out[instance.id] = list(dist.probs)
        return out, self.manifest.renormalize_nli

    def _score_pairs(self, backend: CachingBackend) -> dict[str, list[float]]:
        out = {}
        for instance in self.instances:
            query = backend.text_embedding(instance.query_text)
            template = self._pair_candidate_template(instance)
            texts = [prompts.candidate_pair_text(instance, i, template)
                     for i in range(len(instance.candidates))]
            embeddings = backend.text_embeddings(texts)
            from .scoring import cosine
            out[instance.id] = softmax([cosine(query, emb) for emb in embeddings])
        return out

    def stage_fuse(self) -> dict:
        if "fuse" in self._payloads:
            return self._payloads["fuse"]
        score_payload = self.stage_score()
        fuse_hash = self._hash_fuse(
            self._hash_score(self._hash_embed(self._hash_imagine())))

        def compute() -> dict:
            vision_id = self.manifest.vision_model
            vision_spec = self.backends[vision_id].manifest.model_spec()
            vision_stream = score_payload["streams"][vision_id]
            weights = {}
            streams = {}
            for entry in self.manifest.language_models:
                lm_spec = self.backends[entry.model_id].manifest.model_spec()
                weight = self.manifest.ensemble.resolve_weight(vision_spec, lm_spec)
                weights[entry.model_id] = weight
                lm_stream = score_payload["streams"][entry.model_id]
                fused_probs = {
                    instance.id: _fuse_lists(lm_stream["probs"][instance.id],
                                             vision_stream["probs"][instance.id],
                                             weight)
                    for instance in self.instances
                }
                streams[f"ens:{entry.model_id}"] = {
                    "normalized": lm_stream["normalized"],
                    "probs": fused_probs,
                }
            return {"weights": weights, "streams": streams}

        payload = self.stages.run("fuse", fuse_hash, compute)
        self._payloads["fuse"] = payload
        return payload

    def stage_evaluate(self) -> report_mod.RunReport:
        if "evaluate" in self._payloads:
            return self._report_from_payload(self._payloads["evaluate"])
        score_payload = self.stage_score()
        fuse_payload = self.stage_fuse()
        imagine_payload = self.stage_imagine()
        evaluate_hash = self._hash_evaluate(
            self._hash_fuse(self._hash_score(
                self._hash_embed(self._hash_imagine()))))

        def compute() -> dict:
            all_streams = dict(score_payload["streams"])
            all_streams.update(fuse_payload["streams"])
            rows = []
            for instance in self.instances:
                stream_probs = {
                    stream_id: (stream["probs"][instance.id],
                                bool(stream["normalized"]))
                    for stream_id, stream in all_streams.items()
                }
                rows.append(report_mod.build_row(instance, stream_probs))
            aggregates = report_mod.compute_aggregates(self.task_kind, rows)
            counts = {"recall": 0, "synthesis": 0}
            for result in imagine_payload["texts"].values():
                for image in result["selected"]["images"]:
                    counts[image["source"]] += 1
            fractions = metrics.source_fractions(counts)
            run_report = report_mod.RunReport(
                run_id=self.run_id(),
                task_kind=self.task_kind,
                dataset={
                    "name": self.manifest.dataset.name,
                    "split": self.manifest.dataset.split,
                    "instances": len(self.instances),
                    "content_hash": self.instances_hash,
                },
                config=self.manifest.semantic_dict(),
                model_params=self._model_params(),
                ensemble_weights=fuse_payload["weights"],
                rows=tuple(rows),
                aggregates=aggregates,
                imagination_stats={
                    "recall_fraction": fractions["recall"],
                    "synthesis_fraction": fractions["synthesis"],
                },
            )
            return run_report.to_json_dict()

        payload = self.stages.run("evaluate", evaluate_hash, compute)
        self._payloads["evaluate"] = payload
        return self._report_from_payload(payload)

    def _report_from_payload(self, payload: dict) -> report_mod.RunReport:
        run_report = report_mod.RunReport.from_json_dict(payload)
        run_report.save(self.output_dir / "report.json")
        report_mod.write_aggregates_csv(run_report, self.output_dir / "aggregates.csv")
        report_mod.write_predictions_csv(run_report,
                                         self.output_dir / "predictions.csv")
        return run_report

    def run_id(self) -> str:
        return jsonutil.stable_hash({
            "manifest": self.manifest.semantic_dict(),
            "instances": self.instances_hash,
        })[:16]

    def _save_caches(self) -> None:
        for backend in self.caching.values():
            backend.save()

    def run_stage(self, stage: str) -> Any:
        """Run the pipeline through the named stage."""
        if stage not in STAGES:
            raise ConfigError(f"unknown stage {stage!r}")
        runner = {
            "imagine": self.stage_imagine,
            "embed": self.stage_embed,
            "score": self.stage_score,
            "fuse": self.stage_fuse,
            "evaluate": self.stage_evaluate,
        }
        return runner[stage]()


def _fuse_lists(p_language: Sequence[float], p_vision: Sequence[float],
                weight: float) -> list[float]:
    """Convex combination on raw lists; endpoints are exact copies.

    Checkpointed probabilities are already wire-rounded, so they are
    combined as plain lists rather than revalidated distributions.
    """
    if weight == 0.0:
        return list(p_language)
    if weight == 1.0:
        return list(p_vision)
    return [(1.0 - weight) * a + weight * b
            for a, b in zip(p_language, p_vision)]


def _unique(items: Sequence[str]) -> list[str]:
    seen: set[str] = set()
    out = []
    for item in items:
        if item not in seen:
            seen.add(item)
            out.append(item)
    return out


def run(manifest: RunManifest,
        backends: Mapping[str, Backend] | None = None,
        backends_path: str | Path | None = None) -> report_mod.RunReport:
    """Run every stage and return the final report."""
    if backends is None:
        if backends_path is None:
            raise ConfigError("either backends or backends_path is required")
        backends = build_backends(load_manifests(backends_path))
    return PipelineRun(manifest, backends).stage_evaluate()
