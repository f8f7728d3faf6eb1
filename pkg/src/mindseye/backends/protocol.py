"""The backend interface and its wire-level contract.

A backend is anything that can answer scoring or imagination requests:
an in-process mock, or a remote server speaking the JSON-over-HTTP
protocol below. Each backend serves exactly one capability, declared in
its manifest, and every response is validated against that declaration
before anyone downstream sees it.

Wire protocol (HTTP POST, JSON bodies; floats carry 9 significant
digits on the wire):

==============  =============================================  =========================================
endpoint        request                                        response
==============  =============================================  =========================================
/v1/logprobs    {"model", "text", "span": [start, end]}        {"logprobs": [float, ...]}
/v1/nli         {"model", "premise", "hypothesis"}             {"entailment": float}
/v1/embed_text  {"model", "texts": [str, ...]}                 {"space_id", "embeddings": [[float]]}
/v1/embed_image {"model", "images_b64": [str, ...]}            {"space_id", "embeddings": [[float]]}
/v1/generate    {"model", "prompt", "n", "seed"}               {"images_b64": [str], "params": [obj]}
/v1/search      {"model", "query", "count"}                    {"results": [{"url", "meta"}]}
==============  =============================================  =========================================

Image bytes referenced by search results are fetched with a plain GET
on the returned URL.
"""
from __future__ import annotations

import abc
import math
from typing import Any, Sequence, TYPE_CHECKING

from ..errors import ConfigError, ContractError

if TYPE_CHECKING:
    from .manifest import BackendManifest

ENDPOINTS = {
    "logprobs": "/v1/logprobs",
    "nli": "/v1/nli",
    "embed_text": "/v1/embed_text",
    "embed_image": "/v1/embed_image",
    "generate": "/v1/generate",
    "search": "/v1/search",
}

# Which request methods each backend kind may answer.
KIND_METHODS = {
    "lm_prompt": ("logprobs",),
    "lm_nli": ("nli",),
    "lm_embed": ("embed_text",),
    "vision_text": ("embed_text", "embed_image"),
    "search": ("search", "fetch_image"),
    "generate": ("generate",),
}


def check_logprobs(backend_id: str, values: Any) -> list[float]:
    if not isinstance(values, list) or not values:
        raise ContractError(f"{backend_id}: logprobs must be a non-empty list")
    out: list[float] = []
    for v in values:
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            raise ContractError(f"{backend_id}: logprob {v!r} is not a number")
        f = float(v)
        if not math.isfinite(f) or f > 0.0:
            raise ContractError(f"{backend_id}: logprob {f!r} outside (-inf, 0]")
        out.append(f)
    return out


def check_unit_interval(backend_id: str, value: Any) -> float:
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ContractError(f"{backend_id}: probability {value!r} is not a number")
    f = float(value)
    if not math.isfinite(f) or not 0.0 <= f <= 1.0:
        raise ContractError(f"{backend_id}: probability {f!r} outside [0, 1]")
    return f


def check_vectors(backend_id: str, vectors: Any, expected: int,
                  dim: int) -> list[list[float]]:
    if not isinstance(vectors, list) or len(vectors) != expected:
        raise ContractError(
            f"{backend_id}: expected {expected} embeddings, got "
            f"{len(vectors) if isinstance(vectors, list) else type(vectors).__name__}")
    out: list[list[float]] = []
    for vec in vectors:
        if not isinstance(vec, list) or len(vec) != dim:
            raise ContractError(
                f"{backend_id}: embedding has dimension "
                f"{len(vec) if isinstance(vec, list) else '?'}, declared {dim}")
        row = [float(v) for v in vec]
        if any(not math.isfinite(v) for v in row):
            raise ContractError(f"{backend_id}: embedding has non-finite entries")
        out.append(row)
    return out


class Backend(abc.ABC):
    """One capability of one model, as declared by its manifest."""

    def __init__(self, manifest: "BackendManifest") -> None:
        self.manifest = manifest

    @property
    def backend_id(self) -> str:
        return self.manifest.model_id

    def _require(self, method: str) -> None:
        allowed = KIND_METHODS[self.manifest.kind]
        if method not in allowed:
            raise ConfigError(
                f"backend {self.backend_id!r} of kind {self.manifest.kind!r} "
                f"cannot serve {method!r} requests")

    # Subclasses implement the private request methods; the public ones
    # add the capability gate so misrouted requests fail identically
    # everywhere.

    def logprobs(self, text: str, span: tuple[int, int]) -> list[float]:
        self._require("logprobs")
        return self._logprobs(text, span)

    def nli(self, premise: str, hypothesis: str) -> float:
        self._require("nli")
        return self._nli(premise, hypothesis)

    def embed_text(self, texts: Sequence[str]) -> list[list[float]]:
        self._require("embed_text")
        if not texts:
            return []
        return self._embed_text(list(texts))

    def embed_image(self, images: Sequence[bytes]) -> list[list[float]]:
        self._require("embed_image")
        if not images:
            return []
        return self._embed_image(list(images))

    def generate(self, prompt: str, n: int, seed: int) -> list[tuple[bytes, dict]]:
        self._require("generate")
        if n < 1:
            raise ValueError("generation count must be at least 1")
        return self._generate(prompt, n, seed)

    def search(self, query: str, count: int) -> list[tuple[str, dict]]:
        self._require("search")
        if count < 0:
            raise ValueError("search count must be non-negative")
        return self._search(query, count)

    def fetch_image(self, url: str) -> bytes:
        self._require("fetch_image")
        return self._fetch_image(url)

    def _logprobs(self, text: str, span: tuple[int, int]) -> list[float]:
        raise NotImplementedError

    def _nli(self, premise: str, hypothesis: str) -> float:
        raise NotImplementedError

    def _embed_text(self, texts: list[str]) -> list[list[float]]:
        raise NotImplementedError

    def _embed_image(self, images: list[bytes]) -> list[list[float]]:
        raise NotImplementedError

    def _generate(self, prompt: str, n: int, seed: int) -> list[tuple[bytes, dict]]:
        raise NotImplementedError

    def _search(self, query: str, count: int) -> list[tuple[str, dict]]:
        raise NotImplementedError

    def _fetch_image(self, url: str) -> bytes:
        raise NotImplementedError
