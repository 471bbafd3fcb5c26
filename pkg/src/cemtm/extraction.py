"""Topic-word distributions and document assignments from a trained model.

For every vocabulary word w, the aggregated topic vector is the
importance-weighted mean of the token topic distributions at all corpus
positions where w occurs:

    t_w = (1 / Z_w) * sum_{i in I_w} beta_i * t_i,   Z_w = sum_{i in I_w} beta_i

Image patches participate through their nearest in-vocabulary text token
(cosine similarity, searched within the same document); patches in documents
with no in-vocabulary text are skipped.  Extraction always runs the
deterministic forward path (alpha = mu).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .corpus import Corpus, DocumentRecord, TokenKind, Vocabulary
from .errors import EmptyExtraction, TopicOutOfRange
from .model import TopicModel, infer_theta


@dataclass
class TopicWordMatrix:
    """Aggregated per-word topic scores over the retained vocabulary.

    Rows are convex combinations of token topic distributions, so every row
    lies on the K-simplex.  Words with zero accumulated importance mass are
    dropped; ``occurrence_mass`` keeps each retained word's Z_w.
    """

    words: list[str]
    scores: np.ndarray           # (len(words), K)
    occurrence_mass: np.ndarray  # (len(words),)
    vocabulary: Vocabulary

    @property
    def num_topics(self) -> int:
        return int(self.scores.shape[1])


@dataclass
class TopicSummary:
    topic: int
    words: list[tuple[str, float]]  # descending score, ties lexicographic


def map_patches_to_words(record: DocumentRecord, vocabulary: Vocabulary) -> list[Optional[str]]:
    """Substitute word for each patch token, in patch order.

    A patch maps to the same-document in-vocabulary text token whose
    embedding has the highest cosine similarity; documents without any
    in-vocabulary text token yield None for every patch.
    """
    text_idx = [
        i
        for i, tok in enumerate(record.tokens)
        if tok.kind is TokenKind.TEXT and tok.surface in vocabulary
    ]
    patch_idx = [i for i, tok in enumerate(record.tokens) if tok.kind is TokenKind.PATCH]
    if not patch_idx:
        return []
    if not text_idx:
        return [None] * len(patch_idx)
    H = record.H.astype(np.float64)
    candidates = H[text_idx]
    cand_norms = np.linalg.norm(candidates, axis=1)
    cand_norms[cand_norms == 0] = 1.0
    result: list[Optional[str]] = []
    for i in patch_idx:
        v = H[i]
        norm = np.linalg.norm(v)
        sims = candidates @ v / (cand_norms * (norm if norm > 0 else 1.0))
        best = text_idx[int(np.argmax(sims))]
        result.append(record.tokens[best].surface)
    return result


def aggregate_word_topics(
    corpus: Corpus, model: TopicModel, vocabulary: Vocabulary
) -> TopicWordMatrix:
    """Importance-weighted aggregation of token topic vectors per word."""
    V = len(vocabulary)
    K = model.config.K
    sums = np.zeros((V, K), dtype=np.float64)
    mass = np.zeros(V, dtype=np.float64)
    for record in corpus:
        trace = infer_theta(record, model, deterministic=True)
        t = trace.t.numpy().astype(np.float64)
        beta = trace.beta.numpy().astype(np.float64)
        substitutes = iter(map_patches_to_words(record, vocabulary))
        for i, tok in enumerate(record.tokens):
            if tok.kind is TokenKind.TEXT:
                word = tok.surface if tok.surface in vocabulary else None
            else:
                word = next(substitutes)
            if word is None:
                continue
            w = vocabulary.word_to_index[word]
            sums[w] += beta[i] * t[i]
            mass[w] += beta[i]
    retained = np.flatnonzero(mass > 0)
    if retained.size == 0:
        raise EmptyExtraction("no vocabulary word accumulated importance mass")
    scores = sums[retained] / mass[retained, None]
    return TopicWordMatrix(
        words=[vocabulary.words[i] for i in retained],
        scores=scores,
        occurrence_mass=mass[retained],
        vocabulary=vocabulary,
    )


def top_words(matrix: TopicWordMatrix, k: int, n: int = 10) -> TopicSummary:
    """Top-n words for topic k by aggregated score, ties lexicographic."""
    if not 0 <= k < matrix.num_topics:
        raise TopicOutOfRange(f"topic {k} out of range [0, {matrix.num_topics})")
    column = matrix.scores[:, k]
    ranked = sorted(zip(matrix.words, column), key=lambda ws: (-ws[1], ws[0]))
    return TopicSummary(topic=k, words=[(w, float(s)) for w, s in ranked[:n]])


def all_topic_summaries(matrix: TopicWordMatrix, n: int = 10) -> list[TopicSummary]:
    return [top_words(matrix, k, n) for k in range(matrix.num_topics)]


def assign_documents(
    corpus: Corpus, model: TopicModel
) -> list[tuple[str, np.ndarray, int]]:
    """Deterministic (doc_id, theta, argmax topic) per document.

    Argmax ties resolve toward the lowest topic index.
    """
    out = []
    for record in corpus:
        trace = infer_theta(record, model, deterministic=True)
        theta = trace.theta.numpy()
        out.append((record.doc_id, theta, int(np.argmax(theta))))
    return out


# JSON export ----------------------------------------------------------------

def config_hash(model: TopicModel, vocabulary: Vocabulary) -> str:
    payload = json.dumps(
        {"model": model.config.to_dict(), "vocab_size": len(vocabulary)},
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def summaries_to_json(summaries: list[TopicSummary], config_hash: str) -> str:
    doc = {
        "topics": [
            {
                "id": s.topic,
                "words": [{"word": w, "score": score} for w, score in s.words],
            }
            for s in summaries
        ],
        "config_hash": config_hash,
    }
    return json.dumps(doc, indent=2, ensure_ascii=False)


def summaries_from_json(text: str) -> list[TopicSummary]:
    doc = json.loads(text)
    return [
        TopicSummary(
            topic=int(t["id"]),
            words=[(w["word"], float(w["score"])) for w in t["words"]],
        )
        for t in doc["topics"]
    ]


def write_summaries(summaries: list[TopicSummary], path: Path | str, config_hash: str) -> None:
    Path(path).write_text(summaries_to_json(summaries, config_hash), encoding="utf-8")
