"""Checkpoint wrappers behind the served endpoints.

Every wrapper loads from a checkpoint directory produced by
``checkpoints`` (or any directory with the same layout), runs on CPU in
eval mode, and processes request items one at a time. Per-item forwards
cost nothing at this scale and guarantee that a vector never depends on
what else happened to share its batch, which is what the protocol's
batch-order check demands down to the last bit.
"""
from __future__ import annotations

import hashlib
import io
import json
import math
from pathlib import Path

import numpy as np
import torch
from PIL import Image, ImageDraw

from .errors import SidecarError
from .tokenizer import HashTokenizer

_configured = False


def configure_runtime() -> None:
    # Single-threaded inference keeps reduction order, and therefore
    # every served float, stable across calls.
    global _configured
    if not _configured:
        torch.set_num_threads(1)
        try:
            from transformers.utils import logging as hf_logging
            hf_logging.set_verbosity_error()
            hf_logging.disable_progress_bar()
        except ImportError:
            pass
        _configured = True


def _features(output) -> torch.Tensor:
    """CLIP feature helpers return a plain tensor or a pooled output."""
    return output if torch.is_tensor(output) else output.pooler_output


def _normalized(vec: torch.Tensor) -> np.ndarray:
    arr = vec.detach().numpy().astype(np.float32).reshape(-1)
    norm = np.linalg.norm(arr)
    if norm == 0.0:
        raise SidecarError("embedder produced a zero vector")
    return arr / norm


class PromptScorer:
    """Span logprobs from a causal LM, in natural log."""

    def __init__(self, model, tokenizer: HashTokenizer, device: str) -> None:
        self.model = model.to(device).eval()
        self.tokenizer = tokenizer
        self.device = device
        self.param_count = sum(p.numel() for p in model.parameters())
        self._bos = model.config.bos_token_id
        self._max_len = model.config.n_positions

    @classmethod
    def load(cls, directory: str | Path, device: str = "cpu") -> "PromptScorer":
        configure_runtime()
        from transformers import GPT2LMHeadModel
        return cls(GPT2LMHeadModel.from_pretrained(directory),
                   HashTokenizer.load(directory), device)

    def logprobs(self, text: str, span: tuple[int, int]) -> list[float]:
        """One value per whitespace token overlapping ``span``.

        The whole text is scored in a single forward pass and the span
        is sliced out afterwards, so a sub-span answer is always an
        exact slice of the full-text answer.
        """
        spans = self.tokenizer.token_spans(text)
        ids = [self._bos] + [self.tokenizer.token_id(text[s:e]) for s, e in spans]
        ids = ids[:self._max_len]
        with torch.no_grad():
            logits = self.model(
                input_ids=torch.tensor([ids], device=self.device)).logits
        logp = torch.log_softmax(logits[0].float(), dim=-1)
        start, end = span
        out: list[float] = []
        for index, (s, e) in enumerate(spans):
            if s < end and e > start and index + 1 < len(ids):
                out.append(float(logp[index, ids[index + 1]]))
        return out


class TextEmbedder:
    """Mean-pooled, L2-normalized sentence vectors from a tiny encoder."""

    def __init__(self, model, tokenizer: HashTokenizer, device: str) -> None:
        self.model = model.to(device).eval()
        self.tokenizer = tokenizer
        self.device = device
        self.param_count = sum(p.numel() for p in model.parameters())
        self.dim = model.config.hidden_size
        self._pad = model.config.pad_token_id
        self._max_len = model.config.max_position_embeddings

    @classmethod
    def load(cls, directory: str | Path, device: str = "cpu") -> "TextEmbedder":
        configure_runtime()
        from transformers import BertModel
        return cls(BertModel.from_pretrained(directory),
                   HashTokenizer.load(directory), device)

    def embed_text(self, text: str) -> np.ndarray:
        # An empty text still needs a defined vector: embed the pad id.
        ids = self.tokenizer.encode(text)[:self._max_len] or [self._pad]
        with torch.no_grad():
            hidden = self.model(
                input_ids=torch.tensor([ids], device=self.device),
                attention_mask=torch.ones(1, len(ids), dtype=torch.long,
                                          device=self.device),
            ).last_hidden_state
        return _normalized(hidden[0].mean(dim=0))

    def embed_texts(self, texts: list[str]) -> list[np.ndarray]:
        return [self.embed_text(text) for text in texts]


class NliScorer:
    """Entailment as a calibrated cosine over a shared encoder.

    ``sigmoid(scale * cos(u, v) + bias)`` with the head shipped in the
    checkpoint; identical texts therefore score sigmoid(scale), which
    the head calibration places above the 0.9 conformance pin.
    """

    def __init__(self, embedder: TextEmbedder, scale: float, bias: float) -> None:
        self.embedder = embedder
        self.scale = scale
        self.bias = bias
        self.param_count = embedder.param_count + 2

    @classmethod
    def load(cls, directory: str | Path, device: str = "cpu") -> "NliScorer":
        head = json.loads((Path(directory) / "head.json").read_text("utf-8"))
        return cls(TextEmbedder.load(directory, device),
                   float(head["scale"]), float(head["bias"]))

    def entailment(self, premise: str, hypothesis: str) -> float:
        u = self.embedder.embed_text(premise)
        v = self.embedder.embed_text(hypothesis)
        cosine = float(np.dot(u, v))
        return 1.0 / (1.0 + math.exp(-(self.scale * cosine + self.bias)))


class ClipEmbedder:
    """Joint text/image vectors from a tiny CLIP, unit length."""

    def __init__(self, model, tokenizer: HashTokenizer, preprocess: dict,
                 device: str) -> None:
        self.model = model.to(device).eval()
        self.tokenizer = tokenizer
        self.device = device
        self.param_count = sum(p.numel() for p in model.parameters())
        self.dim = model.config.projection_dim
        self._bos = model.config.text_config.bos_token_id
        self._eos = model.config.text_config.eos_token_id
        self._max_len = model.config.text_config.max_position_embeddings
        self._size = int(preprocess["image_size"])
        self._mean = float(preprocess["mean"])
        self._std = float(preprocess["std"])

    @classmethod
    def load(cls, directory: str | Path, device: str = "cpu") -> "ClipEmbedder":
        configure_runtime()
        from transformers import CLIPModel
        directory = Path(directory)
        preprocess = json.loads((directory / "preprocess.json").read_text("utf-8"))
        return cls(CLIPModel.from_pretrained(directory),
                   HashTokenizer.load(directory), preprocess, device)

    def embed_text(self, text: str) -> np.ndarray:
        content = self.tokenizer.encode(text)[:self._max_len - 2]
        ids = [self._bos] + content + [self._eos]
        with torch.no_grad():
            features = self.model.get_text_features(
                input_ids=torch.tensor([ids], device=self.device))
        return _normalized(_features(features)[0])

    def embed_texts(self, texts: list[str]) -> list[np.ndarray]:
        return [self.embed_text(text) for text in texts]

    def _pixels(self, data: bytes) -> torch.Tensor:
        try:
            image = Image.open(io.BytesIO(data))
            image = image.convert("RGB").resize((self._size, self._size),
                                                Image.BILINEAR)
        except Exception as err:
            raise SidecarError(f"cannot decode image payload: {err}") from err
        arr = np.asarray(image, dtype=np.float32) / 255.0
        arr = (arr - self._mean) / self._std
        return torch.from_numpy(arr.transpose(2, 0, 1)).unsqueeze(0)

    def embed_image(self, data: bytes) -> np.ndarray:
        pixels = self._pixels(data).to(self.device)
        with torch.no_grad():
            features = self.model.get_image_features(pixel_values=pixels)
        return _normalized(_features(features)[0])

    def embed_images(self, images: list[bytes]) -> list[np.ndarray]:
        return [self.embed_image(data) for data in images]


class Painter:
    """Procedural text-to-image generator.

    Each image is a pure function of ``(prompt, request seed, index)``:
    a digest of the triple seeds the draw, and the full draw command
    list is returned as that image's params, so a caller can reproduce
    any output exactly.
    """

    def __init__(self, palette: dict) -> None:
        self.palette = palette
        self.param_count = (len(palette["background"]) + len(palette["colors"]))

    @classmethod
    def load(cls, directory: str | Path, device: str = "cpu") -> "Painter":
        palette = json.loads(
            (Path(directory) / "palette.json").read_text("utf-8"))
        return cls(palette)

    def _rng(self, prompt: str, seed: int, index: int) -> np.random.Generator:
        digest = hashlib.sha256(
            f"{seed}|{index}|{prompt}".encode("utf-8")).digest()
        return np.random.default_rng(int.from_bytes(digest[:8], "little"))

    def _paint(self, prompt: str, seed: int, index: int) -> tuple[bytes, dict]:
        palette = self.palette
        width, height = palette["width"], palette["height"]
        rng = self._rng(prompt, seed, index)
        background = palette["background"][
            int(rng.integers(len(palette["background"])))]
        image = Image.new("RGB", (width, height), background)
        draw = ImageDraw.Draw(image)
        shapes = []
        count = int(rng.integers(palette["min_shapes"],
                                 palette["max_shapes"] + 1))
        for _ in range(count):
            kind = ("ellipse", "rectangle", "line")[int(rng.integers(3))]
            x0, y0 = (int(rng.integers(width)), int(rng.integers(height)))
            x1, y1 = (int(rng.integers(width)), int(rng.integers(height)))
            box = [min(x0, x1), min(y0, y1), max(x0, x1), max(y0, y1)]
            fill = palette["colors"][int(rng.integers(len(palette["colors"])))]
            if kind == "ellipse":
                draw.ellipse(box, fill=fill)
            elif kind == "rectangle":
                draw.rectangle(box, fill=fill)
            else:
                draw.line(box, fill=fill, width=2)
            shapes.append({"kind": kind, "box": box, "fill": fill})
        buffer = io.BytesIO()
        image.save(buffer, format="PNG")
        params = {"request_seed": seed, "index": index, "width": width,
                  "height": height, "background": background, "shapes": shapes}
        return buffer.getvalue(), params

    def generate(self, prompt: str, n: int, seed: int
                 ) -> tuple[list[bytes], list[dict]]:
        images: list[bytes] = []
        params: list[dict] = []
        for index in range(n):
            data, spec = self._paint(prompt, seed, index)
            images.append(data)
            params.append(spec)
        return images, params


_LOADERS = {
    "lm_prompt": PromptScorer.load,
    "lm_nli": NliScorer.load,
    "lm_embed": TextEmbedder.load,
    "vision_text": ClipEmbedder.load,
    "generate": Painter.load,
}


def load_model(kind: str, directory: str | Path, device: str = "cpu"):
    """Load the wrapper class for ``kind`` from ``directory``."""
    try:
        loader = _LOADERS[kind]
    except KeyError:
        raise SidecarError(f"no loader for model kind {kind!r}") from None
    return loader(directory, device)
