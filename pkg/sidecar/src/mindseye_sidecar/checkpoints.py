"""Construction recipes for the desk-scale checkpoint set.

The checkpoints behind the original large-scale results are beyond
desk hardware, so this module builds stand-ins: tiny transformer
checkpoints with deterministic random weights, one per served role.
They are honest protocol citizens (real forward passes, real natural
logs, real unit vectors) without pretending to be competent models.
Weights depend only on ``(seed, component)``, so two builds from the
same seed serve identical answers.

``build_all`` writes the five checkpoint directories plus a ready
``sidecar.json`` and a ``params.json`` with the true parameter count of
every model, which is what a client manifest should declare.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import torch
from transformers import (BertConfig, BertModel, CLIPConfig, CLIPModel,
                          CLIPTextConfig, CLIPVisionConfig, GPT2Config,
                          GPT2LMHeadModel)

from .models import configure_runtime
from .tokenizer import HashTokenizer

CLIP_SPACE = "sidecar-clip-v1"
CLIP_DIM = 16
SBERT_SPACE = "sidecar-sbert-v1"
SBERT_DIM = 24

# Self-entailment through the calibrated cosine head lands at
# sigmoid(scale * 1.0) = 0.9975..., comfortably above the 0.9 pin.
NLI_HEAD = {"scale": 6.0, "bias": 0.0}

PAINTER_PALETTE = {
    "width": 64,
    "height": 64,
    "background": ["#1b2430", "#f4ecd8", "#233a2d", "#3a2233", "#20303c"],
    "colors": ["#e4572e", "#17bebb", "#ffc914", "#76b041", "#a14da0",
               "#c8553d", "#588b8b", "#f2a65a", "#2d728f", "#b5bd89"],
    "min_shapes": 3,
    "max_shapes": 5,
}


def component_seed(seed: int, name: str) -> int:
    """A stable per-component seed so models never share weight draws."""
    digest = hashlib.sha256(f"{seed}:{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") % (2 ** 63)


def _count_params(model: torch.nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


def build_lm(directory: str | Path, seed: int) -> int:
    """Causal LM for span logprobs: tiny GPT-2, hash tokenizer."""
    directory = Path(directory)
    torch.manual_seed(component_seed(seed, "lm"))
    model = GPT2LMHeadModel(GPT2Config(
        vocab_size=512, n_positions=128, n_embd=32, n_layer=2, n_head=2,
        bos_token_id=0, eos_token_id=1))
    model.eval()
    model.save_pretrained(directory)
    # ids 0 and 1 are bos/eos; hashed words land strictly above them.
    HashTokenizer(vocab_size=512, content_lo=2, content_hi=512).save(directory)
    return _count_params(model)


def _build_bert(directory: Path, seed: int, component: str, hidden: int) -> int:
    torch.manual_seed(component_seed(seed, component))
    model = BertModel(BertConfig(
        vocab_size=512, hidden_size=hidden, num_hidden_layers=2,
        num_attention_heads=2, intermediate_size=2 * hidden,
        max_position_embeddings=64, pad_token_id=0))
    model.eval()
    model.save_pretrained(directory)
    HashTokenizer(vocab_size=512, content_lo=1, content_hi=512).save(directory)
    return _count_params(model)


def build_sbert(directory: str | Path, seed: int) -> int:
    """Sentence embedder: tiny BERT, mean pooled then normalized."""
    return _build_bert(Path(directory), seed, "sbert", hidden=SBERT_DIM)


def build_nli(directory: str | Path, seed: int) -> int:
    """Entailment scorer: tiny BERT encoder plus a calibrated cosine head.

    Both texts are embedded with the same encoder and the entailment
    probability is ``sigmoid(scale * cosine + bias)``, so identical
    texts score near one by construction. The head parameters ship in
    the checkpoint and count toward its parameters.
    """
    directory = Path(directory)
    count = _build_bert(directory, seed, "nli", hidden=32)
    (directory / "head.json").write_text(
        json.dumps(NLI_HEAD, indent=2) + "\n", "utf-8")
    return count + len(NLI_HEAD)


def build_clip(directory: str | Path, seed: int) -> int:
    """Joint vision-text embedder: tiny CLIP with a 16-d shared space."""
    directory = Path(directory)
    torch.manual_seed(component_seed(seed, "clip"))
    model = CLIPModel(CLIPConfig(
        text_config=CLIPTextConfig(
            vocab_size=512, hidden_size=32, num_hidden_layers=2,
            num_attention_heads=2, intermediate_size=64,
            max_position_embeddings=32, pad_token_id=0,
            bos_token_id=510, eos_token_id=511),
        vision_config=CLIPVisionConfig(
            hidden_size=32, num_hidden_layers=2, num_attention_heads=2,
            intermediate_size=64, image_size=32, patch_size=8,
            num_channels=3),
        projection_dim=CLIP_DIM))
    model.eval()
    model.save_pretrained(directory)
    # 510/511 are bos/eos; keeping hashed words below both means the
    # single eos is always the highest id, which is what the text
    # tower's pooling position logic expects.
    HashTokenizer(vocab_size=512, content_lo=1, content_hi=510).save(directory)
    (directory / "preprocess.json").write_text(
        json.dumps({"image_size": 32, "mean": 0.5, "std": 0.5}, indent=2) + "\n",
        "utf-8")
    return _count_params(model)


def build_painter(directory: str | Path, seed: int) -> int:
    """Text-to-image generator: a procedural shape painter.

    The checkpoint is its palette file. Every image is a pure function
    of ``(prompt, request seed, index)``, and the exact draw commands
    are returned as the generation params.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    palette = dict(PAINTER_PALETTE, build_seed=seed)
    (directory / "palette.json").write_text(
        json.dumps(palette, indent=2) + "\n", "utf-8")
    return len(palette["background"]) + len(palette["colors"])


_BUILDERS = {
    "tiny-lm": ("lm_prompt", build_lm),
    "tiny-nli": ("lm_nli", build_nli),
    "tiny-sbert": ("lm_embed", build_sbert),
    "tiny-clip": ("vision_text", build_clip),
    "tiny-painter": ("generate", build_painter),
}


def build_all(root: str | Path, seed: int = 7) -> dict[str, int]:
    """Build every checkpoint under ``root``; returns parameter counts.

    Also writes ``root/sidecar.json`` (ready to serve) and
    ``root/params.json`` (what a client manifest should declare).
    """
    configure_runtime()
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    params: dict[str, int] = {}
    models: dict[str, dict] = {}
    for name, (kind, builder) in _BUILDERS.items():
        params[name] = builder(root / name, seed)
        entry: dict = {"kind": kind, "checkpoint": name}
        if name == "tiny-clip":
            entry.update(space_id=CLIP_SPACE, dim=CLIP_DIM)
        elif name == "tiny-sbert":
            entry.update(space_id=SBERT_SPACE, dim=SBERT_DIM)
        models[name] = entry
    config = {"host": "127.0.0.1", "port": 8601, "device": "cpu",
              "max_batch": 8, "models": models}
    (root / "sidecar.json").write_text(
        json.dumps(config, indent=2) + "\n", "utf-8")
    (root / "params.json").write_text(
        json.dumps(params, indent=2, sort_keys=True) + "\n", "utf-8")
    return params
