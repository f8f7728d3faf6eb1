"""Deterministic in-process backend for tests and goldens.

Every response is a pure function of ``(mock seed, request content)``,
derived through SHA-256, with no dependence on any RNG library's stream
layout. Identical requests therefore return identical responses across
processes, platforms, and library versions, which is what makes
byte-for-byte golden runs possible.
"""
from __future__ import annotations

import hashlib
import math
import re
from collections import Counter
from typing import Any, Mapping

from .. import jsonutil
from ..errors import ContractError, TransportError
from .manifest import BackendManifest
from .protocol import Backend

_TOKEN_RE = re.compile(r"\S+")
_GENERATED_IMAGE_BYTES = 96
_URL_PREFIX = "mock://"


def _digest(parts: list[Any]) -> bytes:
    return hashlib.sha256(jsonutil.canonical_bytes(parts)).digest()


def _uniform(parts: list[Any]) -> float:
    """A uniform draw in [0, 1) keyed by the request parts."""
    raw = _digest(parts)
    return int.from_bytes(raw[:8], "little") / 2.0 ** 64


def _byte_stream(parts: list[Any], length: int) -> bytes:
    out = bytearray()
    counter = 0
    while len(out) < length:
        out.extend(_digest(parts + [counter]))
        counter += 1
    return bytes(out[:length])


def tokenize_with_offsets(text: str) -> list[tuple[str, int, int]]:
    """Whitespace tokens with their character spans."""
    return [(m.group(0), m.start(), m.end()) for m in _TOKEN_RE.finditer(text)]


class MockBackend(Backend):
    """Serves any backend kind with hash-derived responses.

    ``calls`` counts served requests per method; cache-idempotence tests
    assert it stays flat across a second run.
    """

    def __init__(self, manifest: BackendManifest, seed: int = 0) -> None:
        super().__init__(manifest)
        self.seed = seed
        self.calls: Counter[str] = Counter()
        inventory = manifest.options.get("search_inventory", {})
        self._search_inventory: Mapping[str, int] = dict(inventory)

    # Each value stream gets its own label so that, for example, a text
    # and an image with colliding hashes still embed differently.

    def _key(self, label: str, *parts: Any) -> list[Any]:
        return [self.seed, self.backend_id, label, *parts]

    def _unit_vector(self, label: str, content_key: str) -> list[float]:
        dim = self.manifest.dim
        assert dim is not None
        values: list[float] = []
        chunk = 0
        while len(values) < dim:
            raw = _digest(self._key(label, content_key, chunk))
            for offset in range(0, 32, 8):
                if len(values) == dim:
                    break
                u = int.from_bytes(raw[offset:offset + 8], "little") / 2.0 ** 64
                values.append(2.0 * u - 1.0)
            chunk += 1
        norm = math.sqrt(sum(v * v for v in values))
        return [v / norm for v in values]

    def _logprobs(self, text: str, span: tuple[int, int]) -> list[float]:
        self.calls["logprobs"] += 1
        start, end = span
        if not 0 <= start < end <= len(text):
            raise ContractError(
                f"{self.backend_id}: span {span!r} out of range for text "
                f"of length {len(text)}")
        spanned = [tok for tok, s, e in tokenize_with_offsets(text)
                   if s < end and e > start]
        if not spanned:
            raise ContractError(f"{self.backend_id}: span {span!r} covers no tokens")
        # Per-token surprisal depends only on the token itself, so equal
        # answer spans score equally regardless of context.
        return [-(0.1 + 4.9 * _uniform(self._key("logprob", tok))) for tok in spanned]

    def _nli(self, premise: str, hypothesis: str) -> float:
        self.calls["nli"] += 1
        return _uniform(self._key("nli", jsonutil.text_hash(premise),
                                  jsonutil.text_hash(hypothesis)))

    def _embed_text(self, texts: list[str]) -> list[list[float]]:
        self.calls["embed_text"] += 1
        return [self._unit_vector("embed_text", jsonutil.text_hash(t)) for t in texts]

    def _embed_image(self, images: list[bytes]) -> list[list[float]]:
        self.calls["embed_image"] += 1
        return [self._unit_vector("embed_image", jsonutil.content_hash(b))
                for b in images]

    def _generate(self, prompt: str, n: int, seed: int) -> list[tuple[bytes, dict]]:
        self.calls["generate"] += 1
        prompt_hash = jsonutil.text_hash(prompt)
        out: list[tuple[bytes, dict]] = []
        for i in range(n):
            data = _byte_stream(self._key("generate", seed, prompt_hash, i),
                                _GENERATED_IMAGE_BYTES)
            out.append((data, {"request_seed": seed, "index": i}))
        return out

    def _search(self, query: str, count: int) -> list[tuple[str, dict]]:
        self.calls["search"] += 1
        available = self._search_inventory.get(query)
        hits = count if available is None else min(count, available)
        query_hash = jsonutil.text_hash(query)
        out: list[tuple[str, dict]] = []
        for i in range(hits):
            token = _digest(self._key("search", query_hash, i)).hex()
            url = f"{_URL_PREFIX}{self.backend_id}/{token}"
            out.append((url, {"rank": i, "query": query}))
        return out

    def _fetch_image(self, url: str) -> bytes:
        self.calls["fetch_image"] += 1
        prefix = f"{_URL_PREFIX}{self.backend_id}/"
        if not url.startswith(prefix):
            raise TransportError(f"{self.backend_id}: cannot fetch {url!r}")
        token = url[len(prefix):]
        return _byte_stream(self._key("image_bytes", token), _GENERATED_IMAGE_BYTES)
