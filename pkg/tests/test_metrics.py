import math

import numpy as np
import pytest

from cemtm.errors import (
    EmptyStats,
    InsufficientWords,
    LabelMismatch,
    NoVectorsAvailable,
    SingleTopic,
)
from cemtm.extraction import TopicSummary
from cemtm.metrics import (
    CooccurrenceStats,
    MetricReport,
    ari,
    irbo,
    load_word_vectors,
    nmi,
    npmi,
    purity,
    rank_biased_overlap,
    topic_diversity,
    we_coherence,
)
from cemtm.verify import oracle_ari, oracle_nmi, oracle_npmi, oracle_purity, oracle_rbo


def summary(topic, words):
    return TopicSummary(topic=topic, words=[(w, 0.0) for w in words])


class TestNpmi:
    def test_perfect_association(self):
        # both words in half the docs, always together
        docs = [frozenset({"w", "v"}), frozenset({"w", "v"}), frozenset({"x"}), frozenset({"y"})]
        stats = CooccurrenceStats(docs)
        value = npmi([summary(0, ["w", "v"])], stats)
        assert value == pytest.approx(1.0, abs=1e-9)

    def test_independent_words(self):
        docs = [
            frozenset({"w", "v"}),
            frozenset({"w"}),
            frozenset({"v"}),
            frozenset(),
        ]
        stats = CooccurrenceStats(docs)
        assert npmi([summary(0, ["w", "v"])], stats) == pytest.approx(0.0, abs=1e-9)

    def test_six_doc_hand_count(self):
        docs = [
            frozenset({"a", "b"}),
            frozenset({"a", "b", "c"}),
            frozenset({"a"}),
            frozenset({"b", "c"}),
            frozenset({"c"}),
            frozenset({"a", "c"}),
        ]
        stats = CooccurrenceStats(docs)
        eps = 1e-12
        # counts by hand: a:4 b:3 c:4, ab:2 ac:2 bc:2, n=6
        def pair(cw, cv, cwv):
            return math.log((cwv / 6 + eps) / ((cw / 6) * (cv / 6))) / -math.log(cwv / 6 + eps)

        want = (pair(4, 3, 2) + pair(4, 4, 2) + pair(3, 4, 2)) / 3
        got = npmi([summary(0, ["a", "b", "c"])], stats)
        assert got == pytest.approx(want, abs=1e-12)

    def test_word_order_symmetric(self):
        docs = [frozenset({"a", "b", "c"}), frozenset({"a"}), frozenset({"b", "c"})]
        stats = CooccurrenceStats(docs)
        assert npmi([summary(0, ["a", "b", "c"])], stats) == pytest.approx(
            npmi([summary(0, ["c", "b", "a"])], stats), abs=1e-12
        )

    def test_empty_stats(self):
        with pytest.raises(EmptyStats):
            npmi([summary(0, ["a", "b"])], CooccurrenceStats([]))

    def test_joint_invariant(self):
        docs = [frozenset({"a", "b"}), frozenset({"a"}), frozenset({"b"})]
        stats = CooccurrenceStats(docs)
        assert stats.joint("a", "b") <= min(stats.count("a"), stats.count("b"))
        assert stats.joint("a", "b") == stats.joint("b", "a")


class TestWeCoherence:
    def test_identical_vectors(self):
        vectors = {w: np.array([1.0, 2.0]) for w in ("a", "b", "c")}
        assert we_coherence([summary(0, ["a", "b", "c"])], vectors) == pytest.approx(1.0)

    def test_orthogonal_vectors(self):
        vectors = {"a": np.array([1.0, 0, 0]), "b": np.array([0, 1.0, 0]), "c": np.array([0, 0, 1.0])}
        assert we_coherence([summary(0, ["a", "b", "c"])], vectors) == pytest.approx(0.0)

    def test_three_vector_oracle(self, rng):
        vecs = {w: rng.normal(size=4) for w in ("a", "b", "c")}

        def cos(x, y):
            return float(x @ y / (np.linalg.norm(x) * np.linalg.norm(y)))

        want = (cos(vecs["a"], vecs["b"]) + cos(vecs["a"], vecs["c"]) + cos(vecs["b"], vecs["c"])) / 3
        assert we_coherence([summary(0, ["a", "b", "c"])], vecs) == pytest.approx(want, abs=1e-12)

    def test_missing_words_skipped(self, rng):
        vecs = {"a": rng.normal(size=3), "b": rng.normal(size=3)}
        got = we_coherence([summary(0, ["a", "b", "zz"])], vecs)
        want = float(vecs["a"] @ vecs["b"] / (np.linalg.norm(vecs["a"]) * np.linalg.norm(vecs["b"])))
        assert got == pytest.approx(want)

    def test_no_vectors_available(self):
        with pytest.raises(NoVectorsAvailable):
            we_coherence([summary(0, ["a", "b"])], {"a": np.ones(2)})

    def test_word2vec_file_round_trip(self, tmp_path, rng):
        path = tmp_path / "vectors.txt"
        words = {"alpha": rng.normal(size=3), "beta": rng.normal(size=3)}
        lines = ["2 3"] + [f"{w} " + " ".join(f"{x:.6f}" for x in v) for w, v in words.items()]
        path.write_text("\n".join(lines), encoding="utf-8")
        loaded = load_word_vectors(path)
        assert set(loaded) == {"alpha", "beta"}
        np.testing.assert_allclose(loaded["alpha"], words["alpha"], atol=1e-6)


class TestTopicDiversity:
    def test_disjoint_lists(self):
        s = [summary(i, [f"t{i}w{j}" for j in range(5)]) for i in range(4)]
        assert topic_diversity(s, 5) == 1.0

    def test_identical_lists(self):
        s = [summary(i, [f"w{j}" for j in range(5)]) for i in range(4)]
        assert topic_diversity(s, 5) == 0.25

    def test_one_shared_word(self):
        s = [
            summary(0, ["a", "b"]),
            summary(1, ["c", "shared"]),
            summary(2, ["d", "shared"]),
        ]
        assert topic_diversity(s, 2) == pytest.approx(5 / 6)

    def test_insufficient_words(self):
        with pytest.raises(InsufficientWords):
            topic_diversity([summary(0, ["a"])], 25)

    def test_bounds(self, rng):
        alphabet = [f"w{i}" for i in range(12)]
        for _ in range(30):
            k = int(rng.integers(2, 5))
            s = [summary(i, list(rng.permutation(alphabet)[:4])) for i in range(k)]
            td = topic_diversity(s, 4)
            assert 1 / k - 1e-12 <= td <= 1.0 + 1e-12


class TestRbo:
    def test_identical_lists_give_exactly_one(self):
        words = ["a", "b", "c", "d"]
        assert rank_biased_overlap(words, words, 0.9, 10) == pytest.approx(1.0, abs=1e-15)

    def test_disjoint_lists_give_zero(self):
        assert rank_biased_overlap(["a", "b"], ["c", "d"], 0.9, 10) == 0.0

    def test_shared_rank_one_matches_term_sum(self):
        a = ["s"] + [f"a{i}" for i in range(9)]
        b = ["s"] + [f"b{i}" for i in range(9)]
        p = 0.9
        # overlap is exactly 1 at every depth
        want = sum((1 - p) * p ** (d - 1) * 1 / d for d in range(1, 11)) + p**10 * 1 / 10
        assert rank_biased_overlap(a, b, p, 10) == pytest.approx(want, abs=1e-12)

    def test_irbo_duplicated_summaries_exactly_zero(self):
        s = [summary(0, ["a", "b", "c"]), summary(1, ["a", "b", "c"])]
        assert irbo(s) == 0.0

    def test_irbo_disjoint_is_one(self):
        s = [summary(0, ["a", "b"]), summary(1, ["c", "d"]), summary(2, ["e", "f"])]
        assert irbo(s) == 1.0

    def test_single_topic_rejected(self):
        with pytest.raises(SingleTopic):
            irbo([summary(0, ["a"])])

    def test_matches_oracle_on_random_lists(self, rng):
        alphabet = [f"w{i}" for i in range(14)]
        for _ in range(50):
            a = list(rng.permutation(alphabet)[: int(rng.integers(1, 11))])
            b = list(rng.permutation(alphabet)[: int(rng.integers(1, 11))])
            p = float(rng.uniform(0.5, 0.99))
            depth = int(rng.integers(1, 11))
            assert rank_biased_overlap(a, b, p, depth) == pytest.approx(
                oracle_rbo(a, b, p, depth), abs=1e-12
            )


class TestClusteringMetrics:
    def _random_case(self, rng, n=20):
        ids = [f"d{i}" for i in range(n)]
        pred = {d: int(rng.integers(0, 5)) for d in ids}
        gold = {d: f"c{rng.integers(0, 4)}" for d in ids}
        return ids, pred, gold

    def test_purity_identical_partitions(self):
        pred = {"a": 0, "b": 0, "c": 1}
        gold = {"a": "x", "b": "x", "c": "y"}
        assert purity(pred, gold) == 1.0

    def test_purity_single_cluster_over_c_classes(self):
        pred = {f"d{i}": 0 for i in range(9)}
        gold = {f"d{i}": f"c{i % 3}" for i in range(9)}
        assert purity(pred, gold) == pytest.approx(1 / 3)

    def test_purity_matches_oracle(self, rng):
        for _ in range(50):
            ids, pred, gold = self._random_case(rng)
            want = oracle_purity([pred[d] for d in ids], [gold[d] for d in ids])
            assert purity(pred, gold) == pytest.approx(want, abs=1e-12)

    def test_purity_never_decreases_under_split(self, rng):
        for _ in range(30):
            ids, pred, gold = self._random_case(rng)
            before = purity(pred, gold)
            cluster = pred[ids[int(rng.integers(len(ids)))]]
            members = [d for d in ids if pred[d] == cluster]
            split = dict(pred)
            for d in members[: len(members) // 2]:
                split[d] = 99
            assert purity(split, gold) >= before - 1e-12

    def test_ari_identical(self):
        pred = {"a": 1, "b": 1, "c": 2, "d": 3}
        gold = {"a": "x", "b": "x", "c": "y", "d": "z"}
        assert ari(pred, gold) == pytest.approx(1.0)

    def test_ari_crossing_pairs_case(self):
        pred = {"1": 0, "2": 0, "3": 1, "4": 1}
        gold = {"1": "a", "2": "b", "3": "a", "4": "b"}
        want = oracle_ari([0, 0, 1, 1], ["a", "b", "a", "b"])
        assert ari(pred, gold) == pytest.approx(want, abs=1e-12)
        assert want == pytest.approx(-0.5)

    def test_ari_one_cluster_vs_balanced(self):
        pred = {f"d{i}": 0 for i in range(8)}
        gold = {f"d{i}": f"c{i % 2}" for i in range(8)}
        want = oracle_ari([0] * 8, [f"c{i % 2}" for i in range(8)])
        assert ari(pred, gold) == pytest.approx(want, abs=1e-12)

    def test_ari_relabeling_invariance(self, rng):
        ids, pred, gold = self._random_case(rng)
        relabeled = {d: pred[d] + 100 for d in ids}
        assert ari(pred, gold) == pytest.approx(ari(relabeled, gold), abs=1e-12)

    def test_ari_degenerate_partitions(self):
        same = {"a": 0, "b": 0}
        assert ari(same, {"a": "x", "b": "x"}) == 1.0
        singletons = {"a": 0, "b": 1}
        assert ari(singletons, {"a": "x", "b": "y"}) == 1.0

    def test_ari_label_mismatch(self):
        with pytest.raises(LabelMismatch):
            ari({"a": 0}, {"b": "x"})

    def test_nmi_identical_partitions(self):
        pred = {"a": 0, "b": 0, "c": 1}
        gold = {"a": "x", "b": "x", "c": "y"}
        assert nmi(pred, gold) == pytest.approx(1.0)

    def test_nmi_single_cluster_convention(self):
        pred = {f"d{i}": 0 for i in range(6)}
        gold = {f"d{i}": f"c{i % 2}" for i in range(6)}
        assert nmi(pred, gold) == 0.0
        gold_single = {f"d{i}": "same" for i in range(6)}
        assert nmi(pred, gold_single) == 1.0

    def test_nmi_matches_oracle_and_sklearn(self, rng):
        from sklearn.metrics import normalized_mutual_info_score

        for _ in range(50):
            ids, pred, gold = self._random_case(rng)
            p = [pred[d] for d in ids]
            g = [gold[d] for d in ids]
            got = nmi(pred, gold)
            assert got == pytest.approx(oracle_nmi(p, g), abs=1e-12)
            assert got == pytest.approx(
                normalized_mutual_info_score(g, p, average_method="geometric"), abs=1e-9
            )

    def test_ari_matches_sklearn(self, rng):
        from sklearn.metrics import adjusted_rand_score

        for _ in range(50):
            ids, pred, gold = self._random_case(rng)
            p = [pred[d] for d in ids]
            g = [gold[d] for d in ids]
            assert ari(pred, gold) == pytest.approx(adjusted_rand_score(g, p), abs=1e-9)

    def test_npmi_random_matches_oracle(self, rng):
        alphabet = [f"w{i}" for i in range(10)]
        for _ in range(30):
            n_docs = int(rng.integers(2, 15))
            docs = [
                frozenset(rng.permutation(alphabet)[: int(rng.integers(1, 9))].tolist())
                for _ in range(n_docs)
            ]
            for w in alphabet:
                if not any(w in s for s in docs):
                    docs[0] = docs[0] | {w}
            topics = [list(rng.permutation(alphabet)[: int(rng.integers(2, 8))]) for _ in range(2)]
            got = npmi([summary(i, t) for i, t in enumerate(topics)], CooccurrenceStats(docs))
            assert got == pytest.approx(oracle_npmi(docs, topics, 1e-12), abs=1e-10)


class TestMetricReport:
    def test_serialization(self):
        report = MetricReport(npmi=0.1, td=0.9, irbo=0.8, purity=1.0, config={"rbo_p": 0.9})
        data = report.to_dict()
        assert data["npmi"] == 0.1
        assert data["we"] is None
        assert "purity=1.0000" in report.summary_line()
        assert "we=-" in report.summary_line()
