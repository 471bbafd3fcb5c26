"""Topic quality and clustering metrics.

Coherence and diversity metrics operate on ranked topic word lists;
clustering metrics compare predicted document assignments against gold
labels.  All functions are pure; the co-occurrence statistics object caches
pair counts as they are requested.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .corpus import Corpus, TokenKind, Vocabulary
from .errors import (
    EmptyStats,
    InsufficientWords,
    LabelMismatch,
    NoVectorsAvailable,
    SingleTopic,
)
from .extraction import TopicSummary

DEFAULT_NPMI_EPSILON = 1e-12
DEFAULT_RBO_P = 0.9
DEFAULT_RBO_DEPTH = 10
DEFAULT_COHERENCE_TOP_N = 10
DEFAULT_DIVERSITY_TOP_N = 25


class CooccurrenceStats:
    """Boolean document-level word and word-pair frequencies."""

    def __init__(self, doc_words: list[frozenset[str]]):
        self.doc_words = doc_words
        self.total_documents = len(doc_words)
        self.counts: dict[str, int] = {}
        for words in doc_words:
            for w in words:
                self.counts[w] = self.counts.get(w, 0) + 1
        self._joint_cache: dict[tuple[str, str], int] = {}

    @classmethod
    def from_corpus(
        cls, corpus: Corpus, vocabulary: Optional[Vocabulary] = None
    ) -> "CooccurrenceStats":
        doc_words = [
            frozenset(
                t.surface
                for t in record.tokens
                if t.kind is TokenKind.TEXT
                and (vocabulary is None or t.surface in vocabulary)
            )
            for record in corpus
        ]
        return cls(doc_words)

    def count(self, word: str) -> int:
        return self.counts.get(word, 0)

    def joint(self, w: str, v: str) -> int:
        key = (w, v) if w <= v else (v, w)
        cached = self._joint_cache.get(key)
        if cached is None:
            cached = sum(1 for words in self.doc_words if w in words and v in words)
            self._joint_cache[key] = cached
        return cached


def npmi(
    summaries: Sequence[TopicSummary],
    stats: CooccurrenceStats,
    epsilon: float = DEFAULT_NPMI_EPSILON,
    top_n: int = DEFAULT_COHERENCE_TOP_N,
) -> float:
    """Mean normalized pointwise mutual information over topic word pairs.

    For each unordered pair (w, v) of a topic's top words:
    log((p(w,v) + eps) / (p(w) p(v))) / -log(p(w,v) + eps), with document
    frequencies as probabilities.  Pairs whose marginals are zero in the
    evaluation corpus carry no signal and are skipped.
    """
    if stats.total_documents == 0:
        raise EmptyStats("co-occurrence statistics cover no documents")
    n = stats.total_documents
    topic_means = []
    for summary in summaries:
        words = [w for w, _ in summary.words[:top_n]]
        pair_values = []
        for w, v in combinations(words, 2):
            pw = stats.count(w) / n
            pv = stats.count(v) / n
            if pw == 0 or pv == 0:
                continue
            pwv = stats.joint(w, v) / n
            value = math.log((pwv + epsilon) / (pw * pv)) / -math.log(pwv + epsilon)
            pair_values.append(value)
        if pair_values:
            topic_means.append(sum(pair_values) / len(pair_values))
    if not topic_means:
        raise EmptyStats("no topic produced a scorable word pair")
    return sum(topic_means) / len(topic_means)


def load_word_vectors(path: Path | str) -> dict[str, np.ndarray]:
    """Read a textual word2vec table: header "count dim", then word + floats."""
    path = Path(path)
    vectors: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as f:
        header = f.readline().split()
        if len(header) != 2:
            raise ValueError(f"bad word-vector header in {path}")
        _, dim = int(header[0]), int(header[1])
        for line in f:
            parts = line.rstrip("\n").split(" ")
            if len(parts) != dim + 1:
                continue
            vectors[parts[0]] = np.asarray([float(x) for x in parts[1:]], dtype=np.float64)
    return vectors


def we_coherence(
    summaries: Sequence[TopicSummary],
    word_vectors: dict[str, np.ndarray],
    top_n: int = DEFAULT_COHERENCE_TOP_N,
) -> float:
    """Mean pairwise cosine similarity among each topic's covered top words.

    Words missing from the vector table are skipped; topics with fewer than
    two covered words contribute nothing.
    """
    topic_means = []
    for summary in summaries:
        vecs = [
            word_vectors[w]
            for w, _ in summary.words[:top_n]
            if w in word_vectors
        ]
        if len(vecs) < 2:
            continue
        sims = []
        for a, b in combinations(vecs, 2):
            denom = np.linalg.norm(a) * np.linalg.norm(b)
            sims.append(float(a @ b / denom) if denom > 0 else 0.0)
        topic_means.append(sum(sims) / len(sims))
    if not topic_means:
        raise NoVectorsAvailable("no topic has two or more words with vectors")
    return sum(topic_means) / len(topic_means)


def topic_diversity(
    summaries: Sequence[TopicSummary], n: int = DEFAULT_DIVERSITY_TOP_N
) -> float:
    """Fraction of unique words across all topics' top-n lists."""
    for summary in summaries:
        if len(summary.words) < n:
            raise InsufficientWords(
                f"topic {summary.topic} has {len(summary.words)} ranked words, needs {n}"
            )
    unique = {w for s in summaries for w, _ in s.words[:n]}
    return len(unique) / (len(summaries) * n)


def rank_biased_overlap(
    a: Sequence[str], b: Sequence[str], p: float = DEFAULT_RBO_P, depth: int = DEFAULT_RBO_DEPTH
) -> float:
    """Truncated rank-biased overlap with the extrapolation term.

    RBO = (1 - p) * sum_{d=1..depth} p^(d-1) * X_d / d  +  p^depth * X_depth / depth
    where X_d is the overlap of the two length-d prefixes.  Identical lists
    give exactly 1, disjoint lists exactly 0.
    """
    depth = min(depth, len(a), len(b))
    if depth == 0:
        return 0.0
    total = 0.0
    x_d = 0
    for d in range(1, depth + 1):
        x_d = len(set(a[:d]) & set(b[:d]))
        total += (1 - p) * p ** (d - 1) * x_d / d
    total += p**depth * x_d / depth
    return total


def irbo(
    summaries: Sequence[TopicSummary],
    p: float = DEFAULT_RBO_P,
    depth: int = DEFAULT_RBO_DEPTH,
) -> float:
    """One minus the mean pairwise RBO between topic word rankings."""
    if len(summaries) < 2:
        raise SingleTopic("I-RBO needs at least two topics")
    ranked = [[w for w, _ in s.words] for s in summaries]
    overlaps = [
        rank_biased_overlap(ranked[i], ranked[j], p, depth)
        for i, j in combinations(range(len(ranked)), 2)
    ]
    return 1.0 - sum(overlaps) / len(overlaps)


# clustering metrics ---------------------------------------------------------

def _aligned(assignments: dict[str, int], labels: dict[str, str]):
    if set(assignments) != set(labels):
        missing = set(assignments) ^ set(labels)
        raise LabelMismatch(f"assignment/label doc sets differ on {sorted(missing)[:5]}")
    ids = sorted(assignments)
    return [assignments[d] for d in ids], [labels[d] for d in ids]


def _contingency(pred: list, gold: list) -> dict[tuple, int]:
    table: dict[tuple, int] = {}
    for p, g in zip(pred, gold):
        table[(p, g)] = table.get((p, g), 0) + 1
    return table


def _same_partition(pred: list, gold: list) -> bool:
    by_pred: dict = {}
    by_gold: dict = {}
    for i, (p, g) in enumerate(zip(pred, gold)):
        by_pred.setdefault(p, set()).add(i)
        by_gold.setdefault(g, set()).add(i)
    return {frozenset(s) for s in by_pred.values()} == {frozenset(s) for s in by_gold.values()}


def purity(assignments: dict[str, int], labels: dict[str, str]) -> float:
    """Fraction of documents sitting in their cluster's majority class."""
    pred, gold = _aligned(assignments, labels)
    table = _contingency(pred, gold)
    clusters: dict = {}
    for (p, g), c in table.items():
        clusters.setdefault(p, {})[g] = c
    correct = sum(max(label_counts.values()) for label_counts in clusters.values())
    return correct / len(pred)


def ari(assignments: dict[str, int], labels: dict[str, str]) -> float:
    """Adjusted Rand index over the pair-counting contingency table.

    A zero denominator (both partitions trivial) is defined as 1 when the
    partitions are identical and 0 otherwise.
    """
    pred, gold = _aligned(assignments, labels)
    table = _contingency(pred, gold)
    n = len(pred)
    row_sums: dict = {}
    col_sums: dict = {}
    for (p, g), c in table.items():
        row_sums[p] = row_sums.get(p, 0) + c
        col_sums[g] = col_sums.get(g, 0) + c
    index = sum(math.comb(c, 2) for c in table.values())
    sum_a = sum(math.comb(c, 2) for c in row_sums.values())
    sum_b = sum(math.comb(c, 2) for c in col_sums.values())
    expected = sum_a * sum_b / math.comb(n, 2) if n >= 2 else 0.0
    denom = (sum_a + sum_b) / 2 - expected
    if denom == 0:
        return 1.0 if _same_partition(pred, gold) else 0.0
    return (index - expected) / denom


def nmi(assignments: dict[str, int], labels: dict[str, str]) -> float:
    """Mutual information normalized by sqrt(H(pred) * H(gold)), natural logs.

    When either entropy is zero the ratio is 0/0; by convention the result
    is 1 for identical partitions and 0 otherwise.
    """
    pred, gold = _aligned(assignments, labels)
    n = len(pred)
    table = _contingency(pred, gold)
    row_sums: dict = {}
    col_sums: dict = {}
    for (p, g), c in table.items():
        row_sums[p] = row_sums.get(p, 0) + c
        col_sums[g] = col_sums.get(g, 0) + c
    h_pred = -sum((c / n) * math.log(c / n) for c in row_sums.values())
    h_gold = -sum((c / n) * math.log(c / n) for c in col_sums.values())
    if h_pred == 0 or h_gold == 0:
        return 1.0 if _same_partition(pred, gold) else 0.0
    mi = sum(
        (c / n) * math.log(n * c / (row_sums[p] * col_sums[g]))
        for (p, g), c in table.items()
    )
    return min(max(mi / math.sqrt(h_pred * h_gold), 0.0), 1.0)


# report ----------------------------------------------------------------------

@dataclass
class MetricReport:
    npmi: float
    td: float
    irbo: float
    we: Optional[float] = None
    purity: Optional[float] = None
    ari: Optional[float] = None
    nmi: Optional[float] = None
    llm: Optional[float] = None
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "npmi": self.npmi,
            "we": self.we,
            "td": self.td,
            "irbo": self.irbo,
            "purity": self.purity,
            "ari": self.ari,
            "nmi": self.nmi,
            "llm": self.llm,
            "config": self.config,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def summary_line(self) -> str:
        def fmt(v):
            return "-" if v is None else f"{v:.4f}"

        return (
            f"npmi={fmt(self.npmi)} we={fmt(self.we)} td={fmt(self.td)} "
            f"irbo={fmt(self.irbo)} purity={fmt(self.purity)} ari={fmt(self.ari)} "
            f"nmi={fmt(self.nmi)} llm={fmt(self.llm)}"
        )
