"""The wire-protocol server.

``build_app`` loads every configured checkpoint, probes each one
against its declared contract (dims, ranges, output shapes), and only
then exposes the ``/v1/*`` endpoints. A declaration the checkpoint
cannot honor is therefore fatal at startup and can never surface as a
malformed response later. One process hosts any mix of endpoint kinds.
"""
from __future__ import annotations

import base64
import binascii
import logging
import threading
from dataclasses import dataclass
from typing import Any

from fastapi import FastAPI
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .config import SidecarConfig
from .errors import ConfigError, SidecarError
from .models import load_model
from .wire import round_floats

log = logging.getLogger(__name__)

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


@dataclass(frozen=True)
class ServedModel:
    """One loaded checkpoint and the declarations it answers under."""

    name: str
    kind: str
    wrapper: Any
    space_id: str | None
    dim: int | None


def _probe_image() -> bytes:
    from io import BytesIO

    from PIL import Image

    buffer = BytesIO()
    Image.new("RGB", (8, 8), "#804020").save(buffer, format="PNG")
    return buffer.getvalue()


def _probe(served: ServedModel) -> None:
    """Assert the loaded checkpoint honors its declared contract."""
    name, wrapper = served.name, served.wrapper
    if served.kind == "lm_prompt":
        text = "startup probe"
        values = wrapper.logprobs(text, (0, len(text)))
        if len(values) != 2 or any(v > 0.0 for v in values):
            raise ConfigError(
                f"model {name!r}: logprob probe returned {values!r}")
    elif served.kind == "lm_nli":
        value = wrapper.entailment("startup probe", "startup probe")
        if not 0.0 <= value <= 1.0:
            raise ConfigError(
                f"model {name!r}: entailment probe out of range: {value!r}")
        log.info("model %s self-entailment %.6f", name, value)
    elif served.kind in ("lm_embed", "vision_text"):
        vector = wrapper.embed_texts(["startup probe"])[0]
        if len(vector) != served.dim:
            raise ConfigError(
                f"model {name!r} declares dim {served.dim} but the "
                f"checkpoint produces {len(vector)}")
        if served.kind == "vision_text":
            image_vector = wrapper.embed_images([_probe_image()])[0]
            if len(image_vector) != served.dim:
                raise ConfigError(
                    f"model {name!r} declares dim {served.dim} but its image "
                    f"tower produces {len(image_vector)}")
    elif served.kind == "generate":
        images, params = wrapper.generate("startup probe", 1, 0)
        if len(images) != 1 or len(params) != 1 or not images[0].startswith(_PNG_MAGIC):
            raise ConfigError(f"model {name!r}: generation probe failed")


def load_registry(config: SidecarConfig) -> dict[str, ServedModel]:
    """Load and contract-probe every configured model."""
    registry: dict[str, ServedModel] = {}
    for name, entry in config.models.items():
        log.info("loading %s (%s) from %s", name, entry.kind, entry.checkpoint)
        try:
            wrapper = load_model(entry.kind, entry.checkpoint, config.device)
        except (OSError, SidecarError, ValueError) as err:
            raise ConfigError(
                f"cannot load model {name!r} from {entry.checkpoint}: {err}"
            ) from err
        served = ServedModel(name=name, kind=entry.kind, wrapper=wrapper,
                             space_id=entry.space_id, dim=entry.dim)
        _probe(served)
        registry[name] = served
    return registry


class LogprobsRequest(BaseModel):
    model: str
    text: str
    span: list[int]


class NliRequest(BaseModel):
    model: str
    premise: str
    hypothesis: str


class EmbedTextRequest(BaseModel):
    model: str
    texts: list[str]


class EmbedImageRequest(BaseModel):
    model: str
    images_b64: list[str]


class GenerateRequest(BaseModel):
    model: str
    prompt: str
    n: int
    seed: int


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse({"error": message}, status_code=status)


def build_app(config: SidecarConfig) -> FastAPI:
    registry = load_registry(config)
    app = FastAPI(title="mindseye-sidecar")
    # Inference serializes on one lock: desk hardware has one
    # accelerator's worth of throughput and callers are told to expect
    # queuing, never reordering.
    lock = threading.Lock()

    def served_for(name: str, kind: str) -> ServedModel:
        served = registry.get(name)
        if served is None:
            raise SidecarError(f"unknown model {name!r}")
        if served.kind != kind:
            raise SidecarError(
                f"model {name!r} has kind {served.kind!r}, not {kind!r}")
        return served

    def answer(payload: dict) -> JSONResponse:
        return JSONResponse(round_floats(payload))

    def run(compute):
        """Run one inference under the lock, mapping failures to codes."""
        try:
            with lock:
                return answer(compute())
        except SidecarError as err:
            return _error(400, str(err))
        except RuntimeError as err:
            if "out of memory" in str(err).lower():
                return _error(503, f"out of memory: {err}")
            raise

    @app.get("/health")
    def health() -> JSONResponse:
        return JSONResponse({
            "status": "ok",
            "models": {name: served.kind for name, served in registry.items()},
        })

    @app.post("/v1/logprobs")
    def logprobs(request: LogprobsRequest) -> JSONResponse:
        if len(request.span) != 2:
            return _error(400, f"span must be [start, end], got {request.span!r}")

        def compute() -> dict:
            served = served_for(request.model, "lm_prompt")
            values = served.wrapper.logprobs(
                request.text, (request.span[0], request.span[1]))
            return {"logprobs": values}

        return run(compute)

    @app.post("/v1/nli")
    def nli(request: NliRequest) -> JSONResponse:
        def compute() -> dict:
            served = served_for(request.model, "lm_nli")
            value = served.wrapper.entailment(request.premise, request.hypothesis)
            return {"entailment": value}

        return run(compute)

    @app.post("/v1/embed_text")
    def embed_text(request: EmbedTextRequest) -> JSONResponse:
        # A vision-text model answers embed_text too: both towers live
        # behind one name, so the kind check is by capability here.
        def compute() -> dict:
            served = registry.get(request.model)
            if served is None:
                raise SidecarError(f"unknown model {request.model!r}")
            if served.kind not in ("lm_embed", "vision_text"):
                raise SidecarError(
                    f"model {request.model!r} has kind {served.kind!r}, "
                    f"which does not embed text")
            vectors = [vector.tolist()
                       for vector in served.wrapper.embed_texts(request.texts)]
            return {"space_id": served.space_id, "embeddings": vectors}

        return run(compute)

    @app.post("/v1/embed_image")
    def embed_image(request: EmbedImageRequest) -> JSONResponse:
        def compute() -> dict:
            served = served_for(request.model, "vision_text")
            vectors: list[list[float]] = []
            # Decode at most max_batch images at a time so request size
            # bounds neither resident bytes nor anything the model sees.
            for start in range(0, len(request.images_b64), config.max_batch):
                chunk = request.images_b64[start:start + config.max_batch]
                try:
                    decoded = [base64.b64decode(item, validate=True)
                               for item in chunk]
                except (binascii.Error, ValueError) as err:
                    raise SidecarError(f"invalid base64 image: {err}") from err
                vectors.extend(vector.tolist()
                               for vector in served.wrapper.embed_images(decoded))
            return {"space_id": served.space_id, "embeddings": vectors}

        return run(compute)

    @app.post("/v1/generate")
    def generate(request: GenerateRequest) -> JSONResponse:
        if request.n < 1:
            return _error(400, f"n must be positive, got {request.n}")

        def compute() -> dict:
            served = served_for(request.model, "generate")
            images, params = served.wrapper.generate(
                request.prompt, request.n, request.seed)
            encoded = [base64.b64encode(data).decode("ascii") for data in images]
            return {"images_b64": encoded, "params": params}

        return run(compute)

    return app


def serve(config: SidecarConfig) -> None:
    """Load, probe, and serve until interrupted."""
    import uvicorn

    app = build_app(config)
    log.info("serving %d models on %s:%d", len(config.models),
             config.host, config.port)
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")
