"""Synthetic clustered corpora for tests, demos, and verification runs.

Documents are generated around well-separated Gaussian centers: every token
embedding is its cluster center plus isotropic noise, token surfaces come
from a per-cluster word pool, and the document embedding is the mean of the
document's token embeddings.  Labels record the generating cluster.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .corpus import DocumentRecord, TokenEntry, TokenKind, write_corpus


def make_clustered_corpus(
    out_dir: Path | str,
    num_clusters: int = 5,
    docs_per_cluster: int = 40,
    tokens_per_doc: int = 20,
    dim: int = 32,
    words_per_cluster: int = 30,
    center_scale: float = 1.0,
    noise_scale: float = 0.2,
    seed: int = 0,
    corpus_id: str = "synthetic",
    cluster_sizes: Optional[Sequence[int]] = None,
) -> Path:
    """Write a labeled synthetic corpus; returns the manifest path.

    ``cluster_sizes`` overrides ``num_clusters``/``docs_per_cluster`` with an
    explicit per-cluster document count; unequal sizes give topic-matching
    dynamics an asymmetry to work with.
    """
    rng = np.random.default_rng(seed)
    sizes = list(cluster_sizes) if cluster_sizes is not None else [docs_per_cluster] * num_clusters
    centers = rng.normal(size=(len(sizes), dim)) * center_scale
    pools = [
        [f"topic{c}word{j:02d}" for j in range(words_per_cluster)]
        for c in range(len(sizes))
    ]
    records = []
    labels = {}
    for c, size in enumerate(sizes):
        for d in range(size):
            doc_id = f"doc{c:02d}_{d:03d}"
            H = centers[c] + rng.normal(size=(tokens_per_doc, dim)) * noise_scale
            H = H.astype(np.float32)
            surfaces = rng.choice(pools[c], size=tokens_per_doc)
            tokens = [TokenEntry(str(s), TokenKind.TEXT) for s in surfaces]
            e_d = H.mean(axis=0)
            records.append(DocumentRecord(doc_id=doc_id, tokens=tokens, H=H, e_d=e_d))
            labels[doc_id] = str(c)
    return write_corpus(
        records, out_dir, corpus_id=corpus_id, encoder_name="synthetic", labels=labels
    )
