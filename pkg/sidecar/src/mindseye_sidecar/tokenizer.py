"""Deterministic hash tokenizer shared by the text checkpoints.

Real deployments pair each checkpoint with its released tokenizer
files. The desk-scale checkpoints instead map whitespace tokens to
stable ids by digest: no vocabulary files ship with the model, every
possible input stays in range, and the id of a word never depends on
what else the model has seen. Special ids (pad, bos, eos) live outside
the content range so they can never collide with a hashed word.
"""
from __future__ import annotations

import hashlib
import json
import re
from dataclasses import asdict, dataclass
from pathlib import Path

_TOKEN_RE = re.compile(r"\S+")
_FILENAME = "hash_tokenizer.json"


@dataclass(frozen=True)
class HashTokenizer:
    """Maps whitespace tokens into ``[content_lo, content_hi)`` by digest."""

    vocab_size: int
    content_lo: int
    content_hi: int

    def __post_init__(self) -> None:
        if not 0 <= self.content_lo < self.content_hi <= self.vocab_size:
            raise ValueError(
                f"content id range [{self.content_lo}, {self.content_hi}) must "
                f"sit inside a vocabulary of {self.vocab_size}")

    def token_spans(self, text: str) -> list[tuple[int, int]]:
        """Character spans of the whitespace tokens, in order."""
        return [match.span() for match in _TOKEN_RE.finditer(text)]

    def token_id(self, token: str) -> int:
        digest = hashlib.sha256(token.encode("utf-8")).digest()
        width = self.content_hi - self.content_lo
        return self.content_lo + int.from_bytes(digest[:8], "little") % width

    def encode(self, text: str) -> list[int]:
        return [self.token_id(text[start:end])
                for start, end in self.token_spans(text)]

    def save(self, directory: str | Path) -> None:
        path = Path(directory) / _FILENAME
        path.write_text(json.dumps(asdict(self), indent=2) + "\n", "utf-8")

    @classmethod
    def load(cls, directory: str | Path) -> "HashTokenizer":
        payload = json.loads((Path(directory) / _FILENAME).read_text("utf-8"))
        return cls(**payload)
