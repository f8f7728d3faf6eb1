"""Response caching around any backend.

Two stores back the wrapper: a JSON-lines file for scalar responses
(log-probabilities, entailment) and a binary embedding cache for
vectors. Both return the *stored* form of a value even on first
insertion, so a run that populates the caches and a later run that
replays them produce bitwise-identical numbers.
"""
from __future__ import annotations

import json
from collections import Counter
from pathlib import Path
from typing import Any, Callable, Sequence

from .. import jsonutil
from ..embcache import EmbeddingCache
from ..errors import ContractError
from ..types import Embedding
from .manifest import BackendManifest
from .protocol import Backend

_EMBED_KINDS = ("lm_embed", "vision_text")


class ResponseCache:
    """Append-only JSON-lines store keyed by request hash."""

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)
        self._entries: dict[str, Any] = {}
        if self.path.exists():
            with open(self.path, "r", encoding="utf-8") as fh:
                for line_no, line in enumerate(fh, start=1):
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        row = json.loads(line)
                        self._entries[row["key"]] = row["value"]
                    except (json.JSONDecodeError, KeyError) as err:
                        raise ContractError(
                            f"response cache {self.path}:{line_no} is corrupt: {err}"
                        ) from err

    def __contains__(self, key: str) -> bool:
        return key in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, key: str) -> Any:
        return self._entries.get(key)

    def put(self, key: str, value: Any) -> Any:
        """Store a response and return its canonical (rounded) form."""
        canonical = json.loads(jsonutil.canonical_dumps(value))
        if key in self._entries:
            return self._entries[key]
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(jsonutil.canonical_dumps({"key": key, "value": canonical}))
            fh.write("\n")
        self._entries[key] = canonical
        return canonical


class CachingBackend(Backend):
    """Backend wrapper that serves repeats from disk.

    ``misses``/``hits`` count per-item cache outcomes; a fully warmed
    cache serves a rerun with zero misses and zero inner calls.
    Generation, search, and URL fetches pass through untouched because
    the imagination layer caches whole ranked sets above this level.
    """

    def __init__(self, inner: Backend, cache_dir: str | Path) -> None:
        super().__init__(inner.manifest)
        self.inner = inner
        self.misses: Counter[str] = Counter()
        self.hits: Counter[str] = Counter()
        cache_dir = Path(cache_dir)
        self._responses: ResponseCache | None = None
        self._embeddings: EmbeddingCache | None = None
        if inner.manifest.kind in ("lm_prompt", "lm_nli"):
            self._responses = ResponseCache(
                cache_dir / f"{self.backend_id}.responses.jsonl")
        if inner.manifest.kind in _EMBED_KINDS:
            assert inner.manifest.space_id is not None
            assert inner.manifest.dim is not None
            self._embeddings = EmbeddingCache(
                cache_dir / f"{self.backend_id}.emb.bin",
                inner.manifest.space_id, inner.manifest.dim)

    def save(self) -> None:
        if self._embeddings is not None:
            self._embeddings.save()

    # -- scalar responses ------------------------------------------------

    def _scalar(self, method: str, key_parts: list[Any],
                compute: Callable[[], Any]) -> Any:
        assert self._responses is not None
        key = jsonutil.stable_hash([self.backend_id, method, *key_parts])
        if key in self._responses:
            self.hits[method] += 1
            return self._responses.get(key)
        self.misses[method] += 1
        return self._responses.put(key, compute())

    def _logprobs(self, text: str, span: tuple[int, int]) -> list[float]:
        return self._scalar(
            "logprobs", [jsonutil.text_hash(text), list(span)],
            lambda: self.inner.logprobs(text, span))

    def _nli(self, premise: str, hypothesis: str) -> float:
        return self._scalar(
            "nli", [jsonutil.text_hash(premise), jsonutil.text_hash(hypothesis)],
            lambda: self.inner.nli(premise, hypothesis))

    # -- embeddings ------------------------------------------------------

    def text_embeddings(self, texts: Sequence[str]) -> list[Embedding]:
        """Embeddings for texts, cached; one inner call covers all misses."""
        self._require("embed_text")
        assert self._embeddings is not None
        keys = [f"text:{jsonutil.text_hash(t)}" for t in texts]
        missing = [i for i, key in enumerate(keys) if key not in self._embeddings]
        self.hits["embed_text"] += len(texts) - len(missing)
        if missing:
            self.misses["embed_text"] += len(missing)
            vectors = self.inner.embed_text([texts[i] for i in missing])
            for i, vec in zip(missing, vectors):
                self._embeddings.put(keys[i], vec)
        out = []
        for key in keys:
            emb = self._embeddings.get(key)
            assert emb is not None
            out.append(emb)
        return out

    def text_embedding(self, text: str) -> Embedding:
        return self.text_embeddings([text])[0]

    def image_embeddings(self, items: Sequence[tuple[str, Callable[[], bytes]]]
                         ) -> list[Embedding]:
        """Embeddings for stored images.

        Each item pairs a content hash with a loader for its bytes; the
        loader runs only on a cache miss, so warmed caches never touch
        the image store.
        """
        self._require("embed_image")
        assert self._embeddings is not None
        keys = [f"image:{content_hash}" for content_hash, _ in items]
        missing = [i for i, key in enumerate(keys) if key not in self._embeddings]
        self.hits["embed_image"] += len(items) - len(missing)
        if missing:
            self.misses["embed_image"] += len(missing)
            vectors = self.inner.embed_image([items[i][1]() for i in missing])
            for i, vec in zip(missing, vectors):
                self._embeddings.put(keys[i], vec)
        out = []
        for key in keys:
            emb = self._embeddings.get(key)
            assert emb is not None
            out.append(emb)
        return out

    def image_embedding(self, content_hash: str,
                        loader: Callable[[], bytes]) -> Embedding:
        return self.image_embeddings([(content_hash, loader)])[0]

    def _embed_text(self, texts: list[str]) -> list[list[float]]:
        return [list(e.values) for e in self.text_embeddings(texts)]

    def _embed_image(self, images: list[bytes]) -> list[list[float]]:
        items = [(jsonutil.content_hash(data), (lambda d=data: d)) for data in images]
        return [list(e.values) for e in self.image_embeddings(items)]

    # -- pass-through ----------------------------------------------------

    def _generate(self, prompt: str, n: int, seed: int) -> list[tuple[bytes, dict]]:
        return self.inner.generate(prompt, n, seed)

    def _search(self, query: str, count: int) -> list[tuple[str, dict]]:
        return self.inner.search(query, count)

    def _fetch_image(self, url: str) -> bytes:
        return self.inner.fetch_image(url)
