import math

import numpy as np
import pytest

from cemtm.errors import DimensionMismatch, EmptyIndex
from cemtm.retrieval import (
    SIM_JENSEN_SHANNON,
    ThetaIndex,
    select_examples,
    topic_similarity,
)


def index_of(entries):
    return ThetaIndex([(doc_id, np.asarray(theta, dtype=np.float64)) for doc_id, theta in entries])


class TestTopicSimilarity:
    def test_identical(self):
        theta = np.array([0.3, 0.7])
        assert topic_similarity(theta, theta) == pytest.approx(1.0)

    def test_disjoint_one_hot(self):
        assert topic_similarity(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0.0

    def test_half_vs_one_hot(self):
        got = topic_similarity(np.array([0.5, 0.5]), np.array([1.0, 0.0]))
        assert got == pytest.approx(0.7071, abs=1e-4)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            topic_similarity(np.ones(2), np.ones(3))

    def test_jensen_shannon_variant(self):
        a = np.array([1.0, 0.0])
        assert topic_similarity(a, a, SIM_JENSEN_SHANNON) == pytest.approx(1.0)
        assert topic_similarity(a, np.array([0.0, 1.0]), SIM_JENSEN_SHANNON) == pytest.approx(
            0.0, abs=1e-12
        )


class TestSelectExamples:
    def test_one_hot_topic_match(self):
        entries = [(f"t{k}_{i}", np.eye(4)[k]) for k in range(4) for i in range(3)]
        index = index_of(entries)
        got = select_examples(np.eye(4)[2], index, k=3)
        assert all(doc.startswith("t2_") for doc, _ in got)
        assert [sim for _, sim in got] == [pytest.approx(1.0)] * 3

    def test_k_larger_than_index(self):
        index = index_of([("a", [1, 0]), ("b", [0, 1])])
        got = select_examples(np.array([1.0, 0.0]), index, k=10)
        assert [d for d, _ in got] == ["a", "b"]

    def test_six_doc_oracle(self, rng):
        thetas = rng.dirichlet(np.ones(3), size=6)
        ids = [f"d{i}" for i in range(6)]
        index = index_of(list(zip(ids, thetas)))
        query = rng.dirichlet(np.ones(3))
        got = [d for d, _ in select_examples(query, index, k=4)]

        def cos(a, b):
            return sum(x * y for x, y in zip(a, b)) / (
                math.sqrt(sum(x * x for x in a)) * math.sqrt(sum(y * y for y in b))
            )

        scored = sorted(
            ((d, cos(query, t)) for d, t in zip(ids, thetas)), key=lambda ds: (-ds[1], ds[0])
        )
        assert got == [d for d, _ in scored[:4]]

    def test_exclusion_soundness(self, rng):
        entries = [(f"d{i}", rng.dirichlet(np.ones(4))) for i in range(10)]
        index = index_of(entries)
        exclude = {"d0", "d3", "d7"}
        got = select_examples(rng.dirichlet(np.ones(4)), index, k=10, exclude=exclude)
        assert not ({d for d, _ in got} & exclude)

    def test_ties_break_on_doc_id(self):
        theta = np.array([0.25, 0.75])
        index = index_of([("zz", theta), ("aa", theta), ("mm", theta)])
        got = select_examples(theta, index, k=3)
        assert [d for d, _ in got] == ["aa", "mm", "zz"]

    def test_empty_after_exclusion(self):
        index = index_of([("only", [1, 0])])
        with pytest.raises(EmptyIndex):
            select_examples(np.array([1.0, 0.0]), index, k=1, exclude={"only"})

    def test_scale_invariance_at_argsort_level(self, rng):
        entries = [(f"d{i}", rng.dirichlet(np.ones(5))) for i in range(12)]
        index = index_of(entries)
        query = rng.dirichlet(np.ones(5))
        base = [d for d, _ in select_examples(query, index, k=12)]
        scaled_entries = [(d, t * float(rng.uniform(0.1, 50))) for d, t in entries]
        scaled = [d for d, _ in select_examples(query * 7.5, index_of(scaled_entries), k=12)]
        assert base == scaled

    def test_deterministic(self, rng):
        entries = [(f"d{i}", rng.dirichlet(np.ones(3))) for i in range(8)]
        query = rng.dirichlet(np.ones(3))
        a = select_examples(query, index_of(entries), k=5)
        b = select_examples(query, index_of(entries), k=5)
        assert a == b


class TestThetaIndex:
    def test_save_load_round_trip(self, tmp_path, rng):
        entries = [(f"d{i}", rng.dirichlet(np.ones(4))) for i in range(5)]
        index = index_of(entries)
        path = tmp_path / "index.json"
        index.save(path)
        loaded = ThetaIndex.load(path)
        assert loaded.K == 4
        assert len(loaded) == 5
        for (a_id, a_theta), (b_id, b_theta) in zip(sorted(index.entries), loaded.entries):
            assert a_id == b_id
            np.testing.assert_allclose(a_theta, b_theta, atol=1e-15)

    def test_duplicate_ids_rejected(self):
        with pytest.raises(ValueError):
            index_of([("a", [1, 0]), ("a", [0, 1])])

    def test_mixed_k_rejected(self):
        with pytest.raises(DimensionMismatch):
            index_of([("a", [1, 0]), ("b", [0, 1, 0])])

    def test_get(self):
        index = index_of([("a", [1, 0]), ("b", [0, 1])])
        np.testing.assert_array_equal(index.get("b"), [0, 1])
        assert index.get("zz") is None
