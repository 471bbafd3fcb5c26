"""Deterministic synthetic encoder backend.

Stands in for the vision-language model so the whole pipeline can run
offline: embeddings are random but structured (each surface has a stable
base vector, every occurrence adds small positional jitter), and the
document embedding is the final position's hidden state, copied bit-exactly.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .preprocess import preprocess_text
from .records import BridgeConfig, BridgeRecord, RawDocument

SUBWORD_SPLIT_LENGTH = 8  # longer words occupy two positions, same surface


def _surface_rng(seed: int, surface: str) -> np.random.Generator:
    digest = hashlib.sha256(f"{seed}:{surface}".encode("utf-8")).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


class SyntheticEncoder:
    def __init__(self, config: BridgeConfig):
        self.config = config

    def encode_document(self, raw: RawDocument) -> BridgeRecord:
        """Encode one document; raises ValueError when nothing survives cleaning."""
        raw.validate()
        dim = self.config.synthetic_dim
        words = preprocess_text(self.config_truncate(raw.text))
        tokens: list[tuple[str, str]] = []
        for word in words:
            positions = 2 if len(word) >= SUBWORD_SPLIT_LENGTH else 1
            tokens.extend((word, "text") for _ in range(positions))
        patch_index = 0
        for _ in raw.image_paths:
            for _ in range(self.config.patches_per_image):
                tokens.append((f"patch:{patch_index}", "patch"))
                patch_index += 1
        if not tokens:
            raise ValueError(f"document {raw.doc_id!r} has no encodable content")

        doc_digest = hashlib.sha256(f"{self.config.seed}:{raw.doc_id}".encode()).digest()
        jitter_rng = np.random.default_rng(int.from_bytes(doc_digest[:8], "little"))
        rows = []
        for surface, _ in tokens:
            base = _surface_rng(self.config.seed, surface).normal(size=dim)
            rows.append(base + 0.1 * jitter_rng.normal(size=dim))
        H = np.asarray(rows, dtype=np.float32)
        e_d = H[-1].copy()  # final position's hidden state, bit-exact
        return BridgeRecord(doc_id=raw.doc_id, tokens=tokens, H=H, e_d=e_d, label=raw.label)

    def config_truncate(self, text: str) -> str:
        # crude token cap: the synthetic backend has no real tokenizer
        words = text.split()
        if len(words) > self.config.max_tokens:
            words = words[: self.config.max_tokens]
        return " ".join(words)

    @property
    def dim(self) -> int:
        return self.config.synthetic_dim

    @property
    def name(self) -> str:
        return f"synthetic-{self.config.synthetic_dim}d-seed{self.config.seed}"
