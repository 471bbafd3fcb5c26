"""Input and output record types for the encoding bridge."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional

import numpy as np


class BridgeError(Exception):
    pass


class ModelLoadError(BridgeError):
    pass


class ImageDecodeError(BridgeError):
    pass


@dataclass
class RawDocument:
    doc_id: str
    text: str = ""
    image_paths: list[str] = field(default_factory=list)
    label: Optional[str] = None

    def validate(self) -> None:
        if not self.doc_id:
            raise ValueError("doc_id must be non-empty")
        if not self.text and not self.image_paths:
            raise ValueError(f"document {self.doc_id!r} has neither text nor images")


@dataclass
class BridgeConfig:
    model_name: str = "TIGER-Lab/VLM2Vec-LLaVa-Next"
    device: str = "cpu"
    max_tokens: int = 4096
    image_size: Optional[int] = None  # None -> the encoder processor's own resize policy
    synthetic: bool = False
    synthetic_dim: int = 64
    patches_per_image: int = 16
    seed: int = 0


@dataclass
class BridgeRecord:
    """One encoded document: per-position states plus the final-token state.

    ``tokens`` holds (surface, kind) pairs with kind "text" or "patch"; H is
    float32 with one row per position, and ``e_d`` is the hidden state of the
    final position.
    """

    doc_id: str
    tokens: list[tuple[str, str]]
    H: np.ndarray
    e_d: np.ndarray
    label: Optional[str] = None


def read_jsonl(path: Path | str) -> Iterator[RawDocument]:
    """Parse one RawDocument per line: {doc_id, text, image_paths, label}."""
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"line {line_no} is not valid JSON: {exc}") from exc
            yield RawDocument(
                doc_id=str(data["doc_id"]),
                text=data.get("text", "") or "",
                image_paths=list(data.get("image_paths", []) or []),
                label=data.get("label"),
            )
