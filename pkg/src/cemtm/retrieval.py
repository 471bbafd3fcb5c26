"""Few-shot example selection from document topic vectors.

Given a query document's topic distribution, return the most topically
similar candidate documents.  Cosine similarity is the default measure;
Jensen-Shannon divergence is available behind a flag.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .errors import DimensionMismatch, EmptyIndex

SIM_COSINE = "cosine"
SIM_JENSEN_SHANNON = "jensen-shannon"


@dataclass
class ThetaIndex:
    """Immutable doc_id -> theta lookup; all vectors share one K."""

    entries: list[tuple[str, np.ndarray]]

    def __post_init__(self):
        ids = [doc_id for doc_id, _ in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError("index contains duplicate doc_ids")
        dims = {theta.shape[0] for _, theta in self.entries}
        if len(dims) > 1:
            raise DimensionMismatch(f"index thetas disagree on K: {sorted(dims)}")

    @property
    def K(self) -> int:
        return int(self.entries[0][1].shape[0]) if self.entries else 0

    def __len__(self) -> int:
        return len(self.entries)

    def get(self, doc_id: str) -> Optional[np.ndarray]:
        for did, theta in self.entries:
            if did == doc_id:
                return theta
        return None

    def save(self, path: Path | str) -> None:
        doc = {doc_id: [float(x) for x in theta] for doc_id, theta in sorted(self.entries)}
        Path(path).write_text(json.dumps(doc, indent=2), encoding="utf-8")

    @classmethod
    def load(cls, path: Path | str) -> "ThetaIndex":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        entries = [
            (doc_id, np.asarray(theta, dtype=np.float64))
            for doc_id, theta in sorted(doc.items())
        ]
        return cls(entries)

    @classmethod
    def from_assignments(cls, assignments: Iterable[tuple[str, np.ndarray, int]]) -> "ThetaIndex":
        return cls([(doc_id, np.asarray(theta, dtype=np.float64)) for doc_id, theta, _ in assignments])


def topic_similarity(a: np.ndarray, b: np.ndarray, measure: str = SIM_COSINE) -> float:
    """Similarity between two topic distributions; cosine by default.

    The Jensen-Shannon variant returns 1 - JSD(a, b) / ln 2 so that higher
    still means more similar.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise DimensionMismatch(f"{a.shape} vs {b.shape}")
    if measure == SIM_COSINE:
        denom = np.linalg.norm(a) * np.linalg.norm(b)
        return float(a @ b / denom) if denom > 0 else 0.0
    if measure == SIM_JENSEN_SHANNON:
        m = (a + b) / 2
        jsd = 0.5 * _kl_div(a, m) + 0.5 * _kl_div(b, m)
        return 1.0 - jsd / math.log(2)
    raise ValueError(f"unknown similarity measure {measure!r}")


def _kl_div(p: np.ndarray, q: np.ndarray) -> float:
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def select_examples(
    query_theta: np.ndarray,
    index: ThetaIndex,
    k: int = 3,
    exclude: Optional[set[str]] = None,
    measure: str = SIM_COSINE,
) -> list[tuple[str, float]]:
    """Top-k candidates by similarity, descending; ties break on doc_id.

    The query document itself must be kept out via ``exclude`` when it is
    part of the index (the CLI does this automatically).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    exclude = exclude or set()
    scored = [
        (doc_id, topic_similarity(query_theta, theta, measure))
        for doc_id, theta in index.entries
        if doc_id not in exclude
    ]
    if not scored:
        raise EmptyIndex("no candidates remain after exclusion")
    scored.sort(key=lambda ds: (-ds[1], ds[0]))
    return scored[:k]
