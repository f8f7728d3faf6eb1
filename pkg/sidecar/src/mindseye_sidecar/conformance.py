"""Black-box contract checks against a live endpoint.

Every check speaks plain HTTP to a running server and asserts only
what the wire protocol promises: declared dims and spaces, value
ranges, nine-significant-digit floats, repeat-call determinism, and
batch answers that never depend on batch composition or order. A
sub-span logprob request must come back as an exact slice of the
full-text answer, and an entailment model must score a premise against
itself above 0.9.
"""
from __future__ import annotations

import base64
import math
import re
from dataclasses import dataclass
from io import BytesIO

import requests
from PIL import Image, ImageDraw

from .wire import round9

_TOKEN_RE = re.compile(r"\S+")
_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"

PROBE_TEXTS = [
    "a photo of a dog",
    "two mugs on a wooden desk",
    "zebra",
    "the oldest lighthouse still burning",
    "melting ice on black sand",
]
PROBE_SENTENCE = "The quick brown fox jumps over the lazy dog."
UNIT_NORM_TOL = 1e-5


@dataclass(frozen=True)
class CheckResult:
    name: str
    ok: bool
    detail: str = ""


class _Probe:
    """One endpoint under test; collects check results."""

    def __init__(self, base_url: str, model: str,
                 session: requests.Session | None = None) -> None:
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.session = session or requests.Session()
        self.results: list[CheckResult] = []

    def post(self, path: str, payload: dict) -> dict:
        response = self.session.post(self.base_url + path,
                                     json={"model": self.model, **payload},
                                     timeout=60)
        response.raise_for_status()
        return response.json()

    def check(self, name: str, ok: bool, detail: str = "") -> None:
        self.results.append(CheckResult(name, bool(ok), detail))

    def guard(self, prefix: str, fn) -> None:
        """Run a check block; a transport or shape error fails it whole."""
        try:
            fn()
        except Exception as err:
            self.check(f"{prefix}.transport", False, f"{type(err).__name__}: {err}")


def _wire_clean(values) -> bool:
    """True when every float already sits on the nine-digit wire grid."""
    if isinstance(values, float):
        return values == round9(values)
    if isinstance(values, list):
        return all(_wire_clean(item) for item in values)
    return True


def _norm(vector: list[float]) -> float:
    return math.sqrt(sum(value * value for value in vector))


def _probe_images() -> list[bytes]:
    """Three deterministic PNGs: gradient, checkerboard, shapes."""
    images: list[bytes] = []
    gradient = Image.new("RGB", (48, 48))
    gradient.putdata([(5 * (x % 48), 3 * (x // 48), 90) for x in range(48 * 48)])
    images.append(gradient)
    board = Image.new("RGB", (40, 40))
    board.putdata([(230, 40, 40) if (x // 8 + (x // 40) // 8) % 2 else (20, 20, 200)
                   for x in range(40 * 40)])
    images.append(board)
    shapes = Image.new("RGB", (56, 56), "#204060")
    draw = ImageDraw.Draw(shapes)
    draw.ellipse([8, 8, 36, 30], fill="#f0c020")
    draw.rectangle([20, 32, 50, 50], fill="#c03030")
    images.append(shapes)
    out: list[bytes] = []
    for image in images:
        buffer = BytesIO()
        image.save(buffer, format="PNG")
        out.append(buffer.getvalue())
    return out


def _check_embeddings(probe: _Probe, path: str, field: str, items: list,
                      space_id: str | None, dim: int | None, prefix: str
                      ) -> None:
    def block() -> None:
        payload = probe.post(path, {field: items})
        vectors = payload["embeddings"]
        probe.check(f"{prefix}.space_id", payload.get("space_id") == space_id,
                    f"got {payload.get('space_id')!r}")
        probe.check(f"{prefix}.dims",
                    len(vectors) == len(items)
                    and all(len(v) == dim for v in vectors),
                    f"declared {dim}")
        deviation = max(abs(_norm(v) - 1.0) for v in vectors)
        probe.check(f"{prefix}.unit_norm", deviation <= UNIT_NORM_TOL,
                    f"max deviation {deviation:.2e}")
        probe.check(f"{prefix}.wire_digits", _wire_clean(vectors))
        again = probe.post(path, {field: items})
        probe.check(f"{prefix}.determinism", again == payload)
        reversed_payload = probe.post(path, {field: items[::-1]})
        probe.check(f"{prefix}.batch_order",
                    reversed_payload["embeddings"] == vectors[::-1])
        alone = [probe.post(path, {field: [item]})["embeddings"][0]
                 for item in items]
        probe.check(f"{prefix}.singleton", alone == vectors)

    probe.guard(prefix, block)


def check_embed_text(probe: _Probe, space_id: str | None, dim: int | None) -> None:
    _check_embeddings(probe, "/v1/embed_text", "texts", PROBE_TEXTS,
                      space_id, dim, "embed_text")


def check_embed_image(probe: _Probe, space_id: str | None, dim: int | None) -> None:
    encoded = [base64.b64encode(data).decode("ascii") for data in _probe_images()]
    _check_embeddings(probe, "/v1/embed_image", "images_b64", encoded,
                      space_id, dim, "embed_image")


def check_logprobs(probe: _Probe) -> None:
    def block() -> None:
        text = PROBE_SENTENCE
        spans = [match.span() for match in _TOKEN_RE.finditer(text)]
        full = probe.post("/v1/logprobs",
                          {"text": text, "span": [0, len(text)]})["logprobs"]
        probe.check("logprobs.count", len(full) == len(spans),
                    f"{len(full)} values for {len(spans)} tokens")
        probe.check("logprobs.range", all(value <= 0.0 for value in full))
        probe.check("logprobs.wire_digits", _wire_clean(full))
        again = probe.post("/v1/logprobs",
                           {"text": text, "span": [0, len(text)]})["logprobs"]
        probe.check("logprobs.determinism", again == full)
        lo, hi = 3, 6
        sub = probe.post("/v1/logprobs", {
            "text": text, "span": [spans[lo][0], spans[hi - 1][1]]})["logprobs"]
        probe.check("logprobs.subspan_slice", sub == full[lo:hi],
                    "sub-span must be an exact slice of the full answer")

    probe.guard("logprobs", block)


def check_nli(probe: _Probe) -> None:
    def block() -> None:
        premise = "A man is playing a guitar on stage."
        hypothesis = "Someone is making music."
        value = probe.post("/v1/nli", {"premise": premise,
                                       "hypothesis": hypothesis})["entailment"]
        probe.check("nli.range", 0.0 <= value <= 1.0, f"got {value!r}")
        probe.check("nli.wire_digits", _wire_clean(value))
        again = probe.post("/v1/nli", {"premise": premise,
                                       "hypothesis": hypothesis})["entailment"]
        probe.check("nli.determinism", again == value)
        self_value = probe.post("/v1/nli", {"premise": premise,
                                            "hypothesis": premise})["entailment"]
        probe.check("nli.self_entailment", self_value > 0.9,
                    f"nli(p, p) = {self_value}")

    probe.guard("nli", block)


def check_generate(probe: _Probe) -> None:
    def block() -> None:
        request = {"prompt": "a red circle on a blue table", "n": 3, "seed": 11}
        payload = probe.post("/v1/generate", request)
        images = payload["images_b64"]
        params = payload["params"]
        probe.check("generate.count",
                    len(images) == request["n"] and len(params) == request["n"])
        decoded = [base64.b64decode(item, validate=True) for item in images]
        probe.check("generate.png",
                    all(data.startswith(_PNG_MAGIC) for data in decoded))
        probe.check("generate.params",
                    all(isinstance(item, dict) for item in params))
        again = probe.post("/v1/generate", request)
        probe.check("generate.determinism", again == payload)
        other = probe.post("/v1/generate", dict(request, seed=12))
        probe.check("generate.seed_sensitivity",
                    other["images_b64"] != images,
                    "a different seed must change the images")

    probe.guard("generate", block)


def run_conformance(base_url: str, model: str, kind: str, *,
                    space_id: str | None = None, dim: int | None = None,
                    session: requests.Session | None = None
                    ) -> list[CheckResult]:
    """Run every contract check that applies to ``kind``."""
    probe = _Probe(base_url, model, session)
    if kind == "lm_prompt":
        check_logprobs(probe)
    elif kind == "lm_nli":
        check_nli(probe)
    elif kind == "lm_embed":
        check_embed_text(probe, space_id, dim)
    elif kind == "vision_text":
        check_embed_text(probe, space_id, dim)
        check_embed_image(probe, space_id, dim)
    elif kind == "generate":
        check_generate(probe)
    else:
        probe.check("kind", False, f"unknown kind {kind!r}")
    return probe.results


def format_lines(model: str, results: list[CheckResult]) -> list[str]:
    lines = []
    for result in results:
        status = "PASS" if result.ok else "FAIL"
        suffix = f"  ({result.detail})" if result.detail and not result.ok else ""
        lines.append(f"[CONFORMANCE] {model}:{result.name}: {status}{suffix}")
    return lines
