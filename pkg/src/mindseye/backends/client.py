"""HTTP client for remote backends.

Transient failures (connection errors, 5xx, 429) are retried with
exponential backoff; quota exhaustion is fatal immediately; any
response that violates the declared contract is fatal with a
diagnostic. An optional token bucket throttles request rate per
backend.
"""
from __future__ import annotations

import base64
import logging
import os
import time

import requests

from .. import jsonutil
from ..errors import ConfigError, ContractError, ProviderQuotaError, TransportError
from .manifest import BackendManifest
from .protocol import (Backend, ENDPOINTS, check_logprobs, check_unit_interval,
                       check_vectors)

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT_S = 60.0
DEFAULT_MAX_ATTEMPTS = 3
DEFAULT_BACKOFF_S = 0.5

_QUOTA_STATUS = (402,)
_RETRY_STATUS = (429, 500, 502, 503, 504)


class TokenBucket:
    """Blocking rate limiter: ``rate`` tokens per second, ``burst`` capacity."""

    def __init__(self, rate: float, burst: float) -> None:
        if rate <= 0 or burst <= 0:
            raise ValueError("rate and burst must be positive")
        self.rate = rate
        self.burst = burst
        self._tokens = burst
        self._last = time.monotonic()

    def acquire(self) -> None:
        while True:
            now = time.monotonic()
            self._tokens = min(self.burst, self._tokens + (now - self._last) * self.rate)
            self._last = now
            if self._tokens >= 1.0:
                self._tokens -= 1.0
                return
            time.sleep((1.0 - self._tokens) / self.rate)


class HttpBackend(Backend):
    """Speaks the JSON-over-HTTP protocol against one base URL."""

    def __init__(self, manifest: BackendManifest,
                 session: requests.Session | None = None) -> None:
        super().__init__(manifest)
        self.base_url = manifest.endpoint.rstrip("/")
        self.session = session or requests.Session()
        opts = manifest.options
        self.timeout_s = float(opts.get("timeout_s", DEFAULT_TIMEOUT_S))
        self.max_attempts = int(opts.get("max_attempts", DEFAULT_MAX_ATTEMPTS))
        self.backoff_s = float(opts.get("backoff_s", DEFAULT_BACKOFF_S))
        rate = opts.get("rate_limit_per_s")
        self._bucket = (TokenBucket(float(rate), float(opts.get("rate_burst", rate)))
                        if rate else None)
        # Credentials stay out of manifests: the manifest names an
        # environment variable and the key is read here, once.
        self._auth_headers: dict[str, str] = {}
        key_env = opts.get("api_key_env")
        if key_env:
            key = os.environ.get(str(key_env))
            if not key:
                raise ConfigError(
                    f"backend {manifest.model_id!r} requires the "
                    f"{key_env} environment variable")
            header = str(opts.get("api_key_header", "Authorization"))
            prefix = str(opts.get("api_key_prefix", "Bearer "))
            self._auth_headers[header] = prefix + key

    def _with_retries(self, send):
        last: TransportError | None = None
        for attempt in range(self.max_attempts):
            if self._bucket is not None:
                self._bucket.acquire()
            try:
                return send()
            except TransportError as err:
                last = err
                if attempt + 1 < self.max_attempts:
                    delay = self.backoff_s * (2.0 ** attempt)
                    log.warning("backend %s transient failure (%s); retrying in %.1fs",
                                self.backend_id, err, delay)
                    time.sleep(delay)
        assert last is not None
        raise last

    def _raise_for_status(self, response: requests.Response) -> None:
        code = response.status_code
        if code < 400:
            return
        body = response.text[:500]
        if code in _QUOTA_STATUS:
            raise ProviderQuotaError(f"{self.backend_id}: quota exhausted: {body}")
        if code in _RETRY_STATUS:
            raise TransportError(f"{self.backend_id}: HTTP {code}: {body}")
        raise ContractError(f"{self.backend_id}: HTTP {code}: {body}")

    def _post(self, endpoint: str, payload: dict) -> dict:
        url = self.base_url + endpoint
        body = jsonutil.canonical_bytes(payload)

        def send() -> dict:
            try:
                response = self.session.post(
                    url, data=body, timeout=self.timeout_s,
                    headers={"Content-Type": "application/json",
                             **self._auth_headers})
            except requests.RequestException as err:
                raise TransportError(f"{self.backend_id}: {err}") from err
            self._raise_for_status(response)
            try:
                return response.json()
            except ValueError as err:
                raise ContractError(
                    f"{self.backend_id}: response is not JSON: {err}") from err

        return self._with_retries(send)

    def _check_space(self, payload: dict) -> None:
        space = payload.get("space_id")
        if space != self.manifest.space_id:
            raise ContractError(
                f"{self.backend_id}: embeddings in space {space!r}, "
                f"declared {self.manifest.space_id!r}")

    def _logprobs(self, text: str, span: tuple[int, int]) -> list[float]:
        payload = self._post(ENDPOINTS["logprobs"], {
            "model": self.backend_id, "text": text, "span": list(span)})
        return check_logprobs(self.backend_id, payload.get("logprobs"))

    def _nli(self, premise: str, hypothesis: str) -> float:
        payload = self._post(ENDPOINTS["nli"], {
            "model": self.backend_id, "premise": premise, "hypothesis": hypothesis})
        return check_unit_interval(self.backend_id, payload.get("entailment"))

    def _embed_text(self, texts: list[str]) -> list[list[float]]:
        payload = self._post(ENDPOINTS["embed_text"], {
            "model": self.backend_id, "texts": texts})
        self._check_space(payload)
        assert self.manifest.dim is not None
        return check_vectors(self.backend_id, payload.get("embeddings"),
                             len(texts), self.manifest.dim)

    def _embed_image(self, images: list[bytes]) -> list[list[float]]:
        encoded = [base64.b64encode(data).decode("ascii") for data in images]
        payload = self._post(ENDPOINTS["embed_image"], {
            "model": self.backend_id, "images_b64": encoded})
        self._check_space(payload)
        assert self.manifest.dim is not None
        return check_vectors(self.backend_id, payload.get("embeddings"),
                             len(images), self.manifest.dim)

    def _generate(self, prompt: str, n: int, seed: int) -> list[tuple[bytes, dict]]:
        payload = self._post(ENDPOINTS["generate"], {
            "model": self.backend_id, "prompt": prompt, "n": n, "seed": seed})
        images = payload.get("images_b64")
        params = payload.get("params")
        if not isinstance(images, list) or len(images) != n:
            raise ContractError(
                f"{self.backend_id}: generate returned "
                f"{len(images) if isinstance(images, list) else '?'} images, asked {n}")
        if not isinstance(params, list) or len(params) != n:
            raise ContractError(f"{self.backend_id}: generate params list malformed")
        try:
            decoded = [base64.b64decode(img, validate=True) for img in images]
        except (ValueError, TypeError) as err:
            raise ContractError(f"{self.backend_id}: invalid image payload: {err}") from err
        return list(zip(decoded, [dict(p) for p in params]))

    def _search(self, query: str, count: int) -> list[tuple[str, dict]]:
        payload = self._post(ENDPOINTS["search"], {
            "model": self.backend_id, "query": query, "count": count})
        results = payload.get("results")
        if not isinstance(results, list) or len(results) > count:
            raise ContractError(
                f"{self.backend_id}: search returned a malformed or oversized result list")
        out: list[tuple[str, dict]] = []
        for row in results:
            url = row.get("url") if isinstance(row, dict) else None
            if not url:
                raise ContractError(f"{self.backend_id}: search result missing url")
            out.append((url, dict(row.get("meta", {}))))
        return out

    def _fetch_image(self, url: str) -> bytes:
        def send() -> bytes:
            try:
                response = self.session.get(url, timeout=self.timeout_s,
                                            headers=self._auth_headers or None)
            except requests.RequestException as err:
                raise TransportError(f"{self.backend_id}: {err}") from err
            self._raise_for_status(response)
            return response.content

        return self._with_retries(send)
