"""Building image pools and ranking them into imagination sets.

For each imagined text, up to ``pool_recall`` images are retrieved from
an image-search provider and ``pool_synthesis`` are synthesized from a
generation provider. The union, deduplicated by content hash with
recalled images taking precedence, is ranked by text-image similarity
and the top ``k`` survive as the text's imagination set. Completed sets
are cached on disk keyed by (text, config), so reruns are free.
"""
from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol, Sequence

from . import jsonutil
from .backends.protocol import Backend
from .errors import BackendError, ConfigError, ContractError
from .types import Embedding, ImageRecord, ImageSource, ImaginationSet

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ImaginationConfig:
    """Pool sizes, selection size, and enabled sources."""

    sources: tuple[str, ...] = ("recall", "synthesis")
    pool_recall: int = 100
    pool_synthesis: int = 100
    top_k: int = 10
    parallelism: int = 8

    def __post_init__(self) -> None:
        if not self.sources:
            raise ConfigError("at least one imagination source must be enabled")
        for source in self.sources:
            if source not in ("recall", "synthesis"):
                raise ConfigError(f"unknown imagination source {source!r}")
        if len(set(self.sources)) != len(self.sources):
            raise ConfigError("imagination sources must be unique")
        if self.pool_recall < 0 or self.pool_synthesis < 0:
            raise ConfigError("pool sizes must be non-negative")
        if self.top_k < 0:
            raise ConfigError("top_k must be non-negative")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be at least 1")

    def config_hash(self) -> str:
        return jsonutil.stable_hash({
            "sources": list(self.sources),
            "pool_recall": self.pool_recall,
            "pool_synthesis": self.pool_synthesis,
            "top_k": self.top_k,
        })


class ImageStore:
    """Content-addressed image files with JSON sidecars.

    Bytes live at ``<root>/<first two hash hex chars>/<hash>.img`` with
    provider metadata beside them in ``<hash>.json``.
    """

    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)

    def _paths(self, content_hash: str) -> tuple[Path, Path]:
        shard = self.root / content_hash[:2]
        return shard / f"{content_hash}.img", shard / f"{content_hash}.json"

    def has(self, content_hash: str) -> bool:
        return self._paths(content_hash)[0].exists()

    def put(self, data: bytes, meta: dict) -> str:
        """Store bytes and metadata; returns the content hash."""
        content_hash = jsonutil.content_hash(data)
        img_path, meta_path = self._paths(content_hash)
        if not img_path.exists():
            img_path.parent.mkdir(parents=True, exist_ok=True)
            tmp = img_path.with_suffix(".tmp")
            tmp.write_bytes(data)
            os.replace(tmp, img_path)
            meta_path.write_text(jsonutil.canonical_dumps(meta), "utf-8")
        return content_hash

    def get_bytes(self, content_hash: str) -> bytes:
        img_path, _ = self._paths(content_hash)
        try:
            return img_path.read_bytes()
        except OSError as err:
            raise ContractError(f"image {content_hash} missing from store") from err

    def get_meta(self, content_hash: str) -> dict:
        _, meta_path = self._paths(content_hash)
        try:
            return json.loads(meta_path.read_text("utf-8"))
        except OSError:
            return {}

    def loader(self, content_hash: str) -> Callable[[], bytes]:
        return lambda: self.get_bytes(content_hash)


class TextImageEmbedder(Protocol):
    """The two embedding operations ranking and scoring need."""

    def embed_text(self, text: str) -> Embedding: ...

    def embed_image(self, record: ImageRecord) -> Embedding: ...


def recall_images(query: str, max_n: int, search_backend: Backend,
                  store: ImageStore, parallelism: int = 8) -> list[ImageRecord]:
    """Search and download up to ``max_n`` deduplicated images.

    Download failures for individual results are logged and skipped;
    only the search call itself can fail the recall. Results keep the
    provider's ranking order.
    """
    if max_n <= 0:
        return []
    results = search_backend.search(query, max_n)

    def fetch(item: tuple[str, dict]) -> tuple[str, dict, bytes | None]:
        url, meta = item
        try:
            return url, meta, search_backend.fetch_image(url)
        except BackendError as err:
            log.warning("dropping unfetchable image %s: %s", url, err)
            return url, meta, None

    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        fetched = list(pool.map(fetch, results))
    records: list[ImageRecord] = []
    seen: set[str] = set()
    for url, meta, data in fetched:
        if data is None:
            continue
        content_hash = store.put(data, {"url": url, **meta})
        if content_hash in seen:
            continue
        seen.add(content_hash)
        records.append(ImageRecord(content_hash, ImageSource.RECALL,
                                   {"url": url, **meta}))
        if len(records) == max_n:
            break
    return records


def synthesize_images(prompt: str, n: int, seed: int, generate_backend: Backend,
                      store: ImageStore) -> list[ImageRecord]:
    """Generate exactly ``n`` images for a prompt.

    Generation is seeded per prompt, so the same run seed reproduces the
    same images. Unlike recall, synthesis never comes up short.
    """
    if n < 1:
        raise ValueError("synthesis count must be at least 1")
    produced = generate_backend.generate(prompt, n, seed)
    if len(produced) != n:
        raise ContractError(
            f"generator returned {len(produced)} images, requested {n}")
    records = []
    for data, params in produced:
        content_hash = store.put(data, {"prompt_params": params})
        records.append(ImageRecord(content_hash, ImageSource.SYNTHESIS,
                                   {"params": params}))
    return records


def dedup_records(records: Sequence[ImageRecord]) -> list[ImageRecord]:
    """Drop repeated content hashes, keeping the first occurrence.

    Pools are assembled recall-first, so when a synthesized image
    duplicates a recalled one the recalled record survives.
    """
    seen: set[str] = set()
    out: list[ImageRecord] = []
    for record in records:
        if record.content_hash in seen:
            continue
        seen.add(record.content_hash)
        out.append(record)
    return out


def rank_and_select(query: str, pool: Sequence[ImageRecord], k: int,
                    embedder: TextImageEmbedder,
                    pool_size_requested: tuple[int, int] = (0, 0)) -> ImaginationSet:
    """Keep the ``k`` pool images most similar to the query text.

    Ordering is by cosine similarity descending with content hash
    ascending as the tie-break, so selection is deterministic. Images
    whose embedding fails are logged and skipped; a short or empty pool
    yields a short or empty set.
    """
    if k < 0:
        raise ValueError("k must be non-negative")
    scored: list[tuple[float, str, ImageRecord]] = []
    if pool and k > 0:
        text_embedding = embedder.embed_text(query)
        for record in pool:
            try:
                image_embedding = embedder.embed_image(record)
            except BackendError as err:
                log.warning("dropping unembeddable image %s: %s",
                            record.content_hash, err)
                continue
            similarity = _cosine(text_embedding, image_embedding)
            scored.append((similarity, record.content_hash, record))
    scored.sort(key=lambda item: (-item[0], item[1]))
    kept = scored[:k]
    return ImaginationSet(
        query_text=query,
        images=tuple(record for _, _, record in kept),
        similarities=tuple(similarity for similarity, _, _ in kept),
        k=k,
        pool_size_requested=pool_size_requested,
    )


def _cosine(a: Embedding, b: Embedding) -> float:
    from .scoring import cosine
    return cosine(a, b)


@dataclass(frozen=True)
class ImaginationResult:
    """A ranked set plus the deduplicated pool it was selected from.

    The pool is kept so analyses can re-rank under a smaller budget
    without calling any provider again.
    """

    selected: ImaginationSet
    pool: tuple[ImageRecord, ...]

    def to_json_dict(self) -> dict:
        return {
            "selected": self.selected.to_json_dict(),
            "pool": [
                {"content_hash": r.content_hash, "source": r.source.value,
                 "provider_meta": dict(r.provider_meta)}
                for r in self.pool
            ],
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "ImaginationResult":
        return cls(
            selected=ImaginationSet.from_json_dict(obj["selected"]),
            pool=tuple(
                ImageRecord(r["content_hash"], ImageSource(r["source"]),
                            dict(r.get("provider_meta", {})))
                for r in obj["pool"]
            ),
        )


class Imaginer:
    """Produces cached imagination results for texts.

    A cache entry keyed by (text hash, config hash) records the ranked
    set and pool; on a hit no search, generation, download, or ranking
    happens at all.
    """

    def __init__(self, config: ImaginationConfig, store: ImageStore,
                 cache_dir: str | Path, embedder: TextImageEmbedder,
                 search_backend: Backend | None,
                 generate_backend: Backend | None, run_seed: int) -> None:
        if "recall" in config.sources and search_backend is None:
            raise ConfigError("recall source enabled but no search backend given")
        if "synthesis" in config.sources and generate_backend is None:
            raise ConfigError("synthesis source enabled but no generate backend given")
        self.config = config
        self.store = store
        self.cache_dir = Path(cache_dir)
        self.embedder = embedder
        self.search_backend = search_backend
        self.generate_backend = generate_backend
        self.run_seed = run_seed

    def _cache_path(self, text: str) -> Path:
        key = jsonutil.stable_hash({
            "text": text, "config": self.config.config_hash()})
        return self.cache_dir / f"{key}.json"

    def imagine(self, text: str) -> ImaginationResult:
        if not text:
            raise ValueError("cannot imagine an empty text")
        cache_path = self._cache_path(text)
        if cache_path.exists():
            return ImaginationResult.from_json_dict(
                json.loads(cache_path.read_text("utf-8")))
        pool: list[ImageRecord] = []
        requested = [0, 0]
        if "recall" in self.config.sources and self.config.pool_recall > 0:
            assert self.search_backend is not None
            requested[0] = self.config.pool_recall
            pool.extend(recall_images(text, self.config.pool_recall,
                                      self.search_backend, self.store,
                                      self.config.parallelism))
        if "synthesis" in self.config.sources and self.config.pool_synthesis > 0:
            assert self.generate_backend is not None
            requested[1] = self.config.pool_synthesis
            seed = jsonutil.derive_seed(self.run_seed, "synthesis", text)
            pool.extend(synthesize_images(text, self.config.pool_synthesis, seed,
                                          self.generate_backend, self.store))
        deduped = dedup_records(pool)
        selected = rank_and_select(text, deduped, self.config.top_k, self.embedder,
                                   (requested[0], requested[1]))
        result = ImaginationResult(selected, tuple(deduped))
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        # Return the parsed stored form, not the in-memory result: later
        # cache hits see wire-rounded similarities, so the first run
        # must too.
        payload = jsonutil.canonical_dumps(result.to_json_dict())
        cache_path.write_text(payload, "utf-8")
        return ImaginationResult.from_json_dict(json.loads(payload))
