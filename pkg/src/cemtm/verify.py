"""Self-verification suites behind the ``verify`` CLI command.

Each group re-derives expected behavior through an independent route
(finite differences, brute-force counting, exhaustive sorting) and compares
the production implementations against it.  The oracles here never call the
functions they check.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import torch

from . import model as model_mod
from . import metrics as metrics_mod
from . import retrieval as retrieval_mod
from .extraction import TopicSummary
from .model import ModelConfig, TopicModel
from .training import gradient_check

GRADIENT_TOLERANCE = 1e-4
GRADIENT_TIME_BUDGET_S = 30.0
ORACLE_TOLERANCE = 1e-9
SIMPLEX_TOLERANCE = 1e-5


@dataclass
class GroupResult:
    name: str
    passed: bool
    detail: str
    seconds: float

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name}: {self.detail} ({self.seconds:.1f}s)"


# --- gradients ---------------------------------------------------------------

def check_gradients(seed: int = 7, trials: int = 20) -> GroupResult:
    start = time.perf_counter()
    err = gradient_check(None, trial_count=trials, seed=seed)
    elapsed = time.perf_counter() - start
    ok = err <= GRADIENT_TOLERANCE and elapsed < GRADIENT_TIME_BUDGET_S
    return GroupResult(
        "gradients", ok, f"max_rel_err={err:.3e} over {trials} trials", elapsed
    )


# --- loss identities ---------------------------------------------------------

def check_losses(seed: int = 7) -> GroupResult:
    start = time.perf_counter()
    rng = torch.Generator()
    rng.manual_seed(seed)
    failures = []

    e = torch.randn(16, generator=rng, dtype=torch.float64)
    if model_mod.loss_rec(e, e).item() != 0.0:
        failures.append("rec(e,e) != 0")

    zero_kl = model_mod.loss_kl(
        torch.zeros(5, dtype=torch.float64), torch.ones(5, dtype=torch.float64)
    ).item()
    if zero_kl != 0.0:
        failures.append(f"kl(0,1) = {zero_kl}")

    one_kl = model_mod.loss_kl(
        torch.ones(1, dtype=torch.float64), torch.ones(1, dtype=torch.float64)
    ).item()
    if one_kl != 0.5:
        failures.append(f"kl(mu=1,sigma=1) = {one_kl}, want 0.5")

    onehot = torch.zeros(6, dtype=torch.float64)
    onehot[2] = 1.0
    for sign in (True, False):
        v = model_mod.loss_ent(onehot, sign).item()
        if v != 0.0:
            failures.append(f"ent(one-hot, prose={sign}) = {v}")

    for n in (2, 4, 7, 64):
        uniform = torch.full((n,), 1.0 / n, dtype=torch.float64)
        v = model_mod.loss_ent(uniform, True).item()
        if abs(v - math.log(n)) > 1e-9:
            failures.append(f"ent(uniform {n}) = {v}, want log {n}")

    detail = "all identities hold" if not failures else "; ".join(failures)
    return GroupResult("losses", not failures, detail, time.perf_counter() - start)


# --- simplex invariants --------------------------------------------------------

def check_simplex(seed: int = 7, passes: int = 10_000, models: int = 100) -> GroupResult:
    """Random forward passes: rows of t, beta, theta on the simplex within 1e-5."""
    start = time.perf_counter()
    rng = torch.Generator()
    rng.manual_seed(seed)
    worst = 0.0
    neg = 0.0
    per_model = passes // models
    for _ in range(models):
        heads = int(torch.randint(1, 3, (1,), generator=rng))
        cfg = ModelConfig(
            D=int(torch.randint(2, 7, (1,), generator=rng)),
            K=int(torch.randint(2, 5, (1,), generator=rng)),
            encoder_hidden=int(torch.randint(3, 7, (1,), generator=rng)),
            imp_model_dim=heads * int(torch.randint(1, 3, (1,), generator=rng)),
            imp_layers=1,
            imp_heads=heads,
        )
        model = TopicModel(cfg)
        with torch.no_grad():
            for p in model.parameters():
                p.copy_(4 * (torch.rand(p.shape, generator=rng) - 0.5))
        with torch.no_grad():
            for i in range(per_model):
                n = int(torch.randint(1, 9, (1,), generator=rng))
                H = torch.randn(n, cfg.D, generator=rng) * 3
                noise = torch.randn(n, generator=rng) if i % 2 else None
                trace = model_mod.forward_trace(model, H, noise)
                for vec in (trace.beta, trace.theta):
                    worst = max(worst, abs(float(vec.sum()) - 1.0))
                    neg = min(neg, float(vec.min()))
                row_sums = trace.t.sum(dim=1)
                worst = max(worst, float((row_sums - 1.0).abs().max()))
                neg = min(neg, float(trace.t.min()))
    ok = worst <= SIMPLEX_TOLERANCE and neg >= 0.0
    detail = f"max |sum-1|={worst:.2e}, min entry={neg:.2e} over {passes} passes"
    return GroupResult("simplex", ok, detail, time.perf_counter() - start)


# --- metric oracles ------------------------------------------------------------

def oracle_purity(pred: Sequence[int], gold: Sequence[str]) -> float:
    total = 0
    for cluster in set(pred):
        members = [g for p, g in zip(pred, gold) if p == cluster]
        total += max(members.count(lbl) for lbl in set(members))
    return total / len(pred)


def oracle_ari(pred: Sequence[int], gold: Sequence[str]) -> float:
    """Pair-counting route: ARI = 2(ad - bc) / ((a+b)(b+d) + (a+c)(c+d))."""
    a = b = c = d = 0
    n = len(pred)
    for i in range(n):
        for j in range(i + 1, n):
            same_pred = pred[i] == pred[j]
            same_gold = gold[i] == gold[j]
            if same_pred and same_gold:
                a += 1
            elif same_pred:
                b += 1
            elif same_gold:
                c += 1
            else:
                d += 1
    denom = (a + b) * (b + d) + (a + c) * (c + d)
    if denom == 0:
        return 1.0 if (b == 0 and c == 0) else 0.0
    return 2 * (a * d - b * c) / denom


def oracle_nmi(pred: Sequence[int], gold: Sequence[str]) -> float:
    # marginals stay integer counts so trivial partitions give exactly zero entropy
    pred_ids = np.unique(pred, return_inverse=True)[1]
    gold_ids = np.unique(gold, return_inverse=True)[1]
    n = len(pred_ids)
    joint = np.zeros((pred_ids.max() + 1, gold_ids.max() + 1), dtype=np.int64)
    for p, g in zip(pred_ids, gold_ids):
        joint[p, g] += 1
    row = joint.sum(axis=1)
    col = joint.sum(axis=0)
    h_pred = -sum((c / n) * math.log(c / n) for c in row if c > 0)
    h_gold = -sum((c / n) * math.log(c / n) for c in col if c > 0)
    if h_pred == 0 or h_gold == 0:
        same = {frozenset(np.flatnonzero(pred_ids == v).tolist()) for v in set(pred_ids)} == {
            frozenset(np.flatnonzero(gold_ids == v).tolist()) for v in set(gold_ids)
        }
        return 1.0 if same else 0.0
    mi = 0.0
    for p in range(joint.shape[0]):
        for g in range(joint.shape[1]):
            if joint[p, g] > 0:
                mi += (joint[p, g] / n) * math.log(n * joint[p, g] / (row[p] * col[g]))
    return min(max(mi / math.sqrt(h_pred * h_gold), 0.0), 1.0)


def oracle_rbo(a: Sequence[str], b: Sequence[str], p: float, depth: int) -> float:
    depth = min(depth, len(a), len(b))
    if depth == 0:
        return 0.0
    terms = []
    for d in range(1, depth + 1):
        overlap = sum(1 for item in a[:d] if item in b[:d])
        terms.append((1 - p) * p ** (d - 1) * overlap / d)
    final_overlap = sum(1 for item in a[:depth] if item in b[:depth])
    terms.append(p**depth * final_overlap / depth)
    return math.fsum(terms)


def oracle_npmi(
    doc_sets: Sequence[frozenset[str]], topics: Sequence[list[str]], eps: float
) -> float:
    n = len(doc_sets)
    topic_means = []
    for words in topics:
        values = []
        for i in range(len(words)):
            for j in range(i + 1, len(words)):
                w, v = words[i], words[j]
                cw = sum(1 for s in doc_sets if w in s)
                cv = sum(1 for s in doc_sets if v in s)
                if cw == 0 or cv == 0:
                    continue
                cwv = sum(1 for s in doc_sets if w in s and v in s)
                pmi = math.log((cwv / n + eps) / ((cw / n) * (cv / n)))
                values.append(pmi / -math.log(cwv / n + eps))
        if values:
            topic_means.append(sum(values) / len(values))
    return sum(topic_means) / len(topic_means)


def _random_partition_pair(rng: np.random.Generator) -> tuple[list[int], list[str]]:
    n = int(rng.integers(2, 21))
    style = int(rng.integers(0, 10))
    pred = rng.integers(0, int(rng.integers(1, 6)), size=n).tolist()
    gold = [f"c{v}" for v in rng.integers(0, int(rng.integers(1, 6)), size=n)]
    if style == 0:
        pred = [0] * n
    elif style == 1:
        gold = ["c0"] * n
    elif style == 2:
        pred = list(range(n))
    elif style == 3:
        gold = [f"c{i}" for i in range(n)]
    elif style == 4:
        gold = [f"c{v}" for v in pred]
    return pred, gold


def check_metric_oracles(seed: int = 7, instances: int = 200) -> GroupResult:
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    failures = []

    worst = {"purity": 0.0, "ari": 0.0, "nmi": 0.0}
    for _ in range(instances):
        pred, gold = _random_partition_pair(rng)
        ids = [f"d{i}" for i in range(len(pred))]
        assignments = dict(zip(ids, pred))
        labels = dict(zip(ids, gold))
        ranges = {"purity": (0.0, 1.0), "ari": (-1.0, 1.0), "nmi": (0.0, 1.0)}
        for name, impl, oracle in (
            ("purity", metrics_mod.purity, oracle_purity),
            ("ari", metrics_mod.ari, oracle_ari),
            ("nmi", metrics_mod.nmi, oracle_nmi),
        ):
            got = impl(assignments, labels)
            want = oracle(pred, gold)
            worst[name] = max(worst[name], abs(got - want))
            if abs(got - want) > ORACLE_TOLERANCE:
                failures.append(f"{name}: |{got} - {want}| on n={len(pred)}")
            lo, hi = ranges[name]
            if not lo - 1e-12 <= got <= hi + 1e-12:
                failures.append(f"{name}: {got} outside [{lo}, {hi}]")
            if name == "purity" and got <= 0:
                failures.append(f"purity {got} not strictly positive")

    worst_rbo = 0.0
    alphabet = [f"w{i}" for i in range(14)]
    for _ in range(instances):
        la = rng.permutation(alphabet)[: int(rng.integers(1, 11))].tolist()
        lb = rng.permutation(alphabet)[: int(rng.integers(1, 11))].tolist()
        p = float(rng.uniform(0.5, 0.99))
        depth = int(rng.integers(1, 11))
        got = metrics_mod.rank_biased_overlap(la, lb, p, depth)
        want = oracle_rbo(la, lb, p, depth)
        worst_rbo = max(worst_rbo, abs(got - want))
        if abs(got - want) > ORACLE_TOLERANCE:
            failures.append(f"rbo: |{got} - {want}|")

    worst_npmi = 0.0
    for _ in range(instances):
        n_docs = int(rng.integers(2, 21))
        doc_sets = []
        for _ in range(n_docs):
            size = int(rng.integers(1, len(alphabet)))
            doc_sets.append(frozenset(rng.permutation(alphabet)[:size].tolist()))
        # every alphabet word must occur somewhere so all pairs are scorable
        for w in alphabet:
            if not any(w in s for s in doc_sets):
                i = int(rng.integers(0, n_docs))
                doc_sets[i] = doc_sets[i] | {w}
        topics = [
            rng.permutation(alphabet)[: int(rng.integers(2, 11))].tolist()
            for _ in range(int(rng.integers(1, 4)))
        ]
        summaries = [
            TopicSummary(topic=i, words=[(w, 0.0) for w in t]) for i, t in enumerate(topics)
        ]
        stats = metrics_mod.CooccurrenceStats(doc_sets)
        got = metrics_mod.npmi(summaries, stats)
        want = oracle_npmi(doc_sets, topics, metrics_mod.DEFAULT_NPMI_EPSILON)
        worst_npmi = max(worst_npmi, abs(got - want))
        if abs(got - want) > ORACLE_TOLERANCE:
            failures.append(f"npmi: |{got} - {want}|")

    # topic diversity on constructed cases: disjoint lists -> 1, identical -> 1/K
    k, n = 4, 5
    disjoint = [
        TopicSummary(topic=i, words=[(f"t{i}w{j}", 1.0) for j in range(n)]) for i in range(k)
    ]
    identical = [
        TopicSummary(topic=i, words=[(f"shared{j}", 1.0) for j in range(n)]) for i in range(k)
    ]
    if metrics_mod.topic_diversity(disjoint, n) != 1.0:
        failures.append("td(disjoint) != 1")
    if metrics_mod.topic_diversity(identical, n) != 1.0 / k:
        failures.append("td(identical) != 1/K")

    detail = (
        f"purity/ari/nmi/rbo/npmi max dev = "
        f"{max(worst.values()):.1e}/{worst_rbo:.1e}/{worst_npmi:.1e}; td exact"
        if not failures
        else "; ".join(failures[:4])
    )
    return GroupResult("metrics", not failures, detail, time.perf_counter() - start)


# --- retrieval -----------------------------------------------------------------

def _oracle_cosine(a: Sequence[float], b: Sequence[float]) -> float:
    dot = sum(x * y for x, y in zip(a, b))
    na = math.sqrt(sum(x * x for x in a))
    nb = math.sqrt(sum(y * y for y in b))
    return dot / (na * nb) if na > 0 and nb > 0 else 0.0


def check_retrieval(seed: int = 7, instances: int = 100) -> GroupResult:
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    failures = 0
    for _ in range(instances):
        n_docs = int(rng.integers(1, 51))
        k_topics = int(rng.integers(2, 9))
        ids = [f"d{i:03d}" for i in range(n_docs)]
        thetas = rng.dirichlet(np.ones(k_topics), size=n_docs)
        index = retrieval_mod.ThetaIndex(list(zip(ids, thetas)))
        query = rng.dirichlet(np.ones(k_topics))
        exclude = set(rng.permutation(ids)[: int(rng.integers(0, max(1, n_docs // 3)))].tolist())
        if len(exclude) == n_docs:
            exclude.pop()
        k = int(rng.integers(1, n_docs + 2))
        got = retrieval_mod.select_examples(query, index, k=k, exclude=exclude)
        scored = [
            (doc_id, _oracle_cosine(query.tolist(), theta.tolist()))
            for doc_id, theta in zip(ids, thetas)
            if doc_id not in exclude
        ]
        want = sorted(scored, key=lambda ds: (-ds[1], ds[0]))[:k]
        if [d for d, _ in got] != [d for d, _ in want]:
            failures += 1
    detail = f"{instances - failures}/{instances} indices match the exhaustive oracle"
    return GroupResult("retrieval", failures == 0, detail, time.perf_counter() - start)


# --- runner ----------------------------------------------------------------------

GROUPS = {
    "gradients": check_gradients,
    "losses": check_losses,
    "simplex": check_simplex,
    "metrics": check_metric_oracles,
    "retrieval": check_retrieval,
}


def run_verification(only: Optional[str] = None, seed: int = 7) -> list[GroupResult]:
    if only is not None and only not in GROUPS:
        raise ValueError(f"unknown verification group {only!r}; options: {sorted(GROUPS)}")
    names = [only] if only else list(GROUPS)
    return [GROUPS[name](seed=seed) for name in names]
