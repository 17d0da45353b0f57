"""Fact retrieval against an independent brute-force oracle.

The oracle below recomputes the ranking with plain double loops and a full
sort, sharing no code with the module under test beyond the embedding table.
"""

import logging

import numpy as np
import pytest

from kvqa.data.datasets import Detection
from kvqa.data.embeddings import EmbeddingTable, random_table
from kvqa.data.kb import make_fact
from kvqa.retrieval import (
    RetrievalQuery,
    build_query,
    cosine,
    retrieve_for_sample,
    retrieve_top_k,
    score_fact,
)


def oracle_scores(facts, query_vectors, table):
    """Mean pairwise cosine, written independently of the module."""
    out = []
    for fact in facts:
        tokens = fact.subject + fact.relation + fact.object
        total, pairs = 0.0, 0
        for tok in tokens:
            tv = table.lookup(tok)
            for qv in query_vectors:
                na, nb = np.linalg.norm(tv), np.linalg.norm(qv)
                total += 0.0 if na == 0 or nb == 0 else float(tv @ qv / (na * nb))
                pairs += 1
        out.append(total / pairs if pairs else 0.0)
    return out


def oracle_top_k(facts, query_vectors, table, k):
    scores = oracle_scores(facts, query_vectors, table)
    ranked = sorted(range(len(facts)), key=lambda i: (-scores[i], i))
    return [(i, scores[i]) for i in ranked if scores[i] != 0.0][:k]


def test_cosine_basics():
    assert cosine(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0.0
    assert cosine(np.array([2.0, 0.0]), np.array([5.0, 0.0])) == pytest.approx(1.0)
    assert cosine(np.zeros(2), np.array([1.0, 1.0])) == 0.0


def test_query_requires_positive_k():
    with pytest.raises(ValueError, match="k must be"):
        RetrievalQuery(vectors=np.zeros((1, 4)), k=0)


def test_score_matches_oracle_on_random_kb():
    rng = np.random.default_rng(0)
    tokens = [f"tok{i}" for i in range(30)]
    table = random_table(tokens, dim=12, seed=1)
    facts = []
    for i in range(40):
        s, r, o = rng.choice(30, size=3)
        facts.append(make_fact(f"tok{s}", f"tok{r}", f"tok{o}", table))
    qvecs = rng.standard_normal((3, 12))
    query = RetrievalQuery(vectors=qvecs, k=5)
    expected = oracle_scores(facts, qvecs, table)
    for fact, want in zip(facts, expected):
        assert score_fact(fact, query, table) == pytest.approx(want, abs=1e-9)


def test_top_k_matches_full_sort_oracle_on_large_kb():
    rng = np.random.default_rng(2)
    tokens = [f"tok{i}" for i in range(50)]
    table = random_table(tokens, dim=8, seed=3)
    facts = []
    for i in range(1000):
        s, r, o = rng.choice(50, size=3)
        facts.append(make_fact(f"tok{s}", f"tok{r}", f"tok{o}", table))
    qvecs = rng.standard_normal((2, 8))
    query = RetrievalQuery(vectors=qvecs, k=7)
    got = retrieve_top_k(facts, query, table)
    want = oracle_top_k(facts, qvecs, table, 7)
    assert [i for i, _ in got] == [i for i, _ in want]
    for (_, gs), (_, ws) in zip(got, want):
        assert gs == pytest.approx(ws, abs=1e-9)


def test_ranking_is_invariant_to_query_scale():
    tokens = [f"tok{i}" for i in range(10)]
    table = random_table(tokens, dim=6, seed=4)
    facts = [make_fact(f"tok{i}", f"tok{(i + 1) % 10}", f"tok{(i + 2) % 10}", table)
             for i in range(10)]
    rng = np.random.default_rng(5)
    qvecs = rng.standard_normal((2, 6))
    base = retrieve_top_k(facts, RetrievalQuery(vectors=qvecs, k=4), table)
    scaled = retrieve_top_k(facts, RetrievalQuery(vectors=qvecs * 37.0, k=4), table)
    assert [i for i, _ in base] == [i for i, _ in scaled]
    for (_, a), (_, b) in zip(base, scaled):
        assert a == pytest.approx(b, abs=1e-9)  # cosine kills the magnitude


def test_zero_scoring_facts_are_dropped():
    table = EmbeddingTable(dim=2, vectors={
        "hit": [1.0, 0.0], "miss": [0.0, 0.0], "q": [1.0, 0.0],
    })
    facts = [make_fact("hit", "hit", "hit", table),
             make_fact("miss", "miss", "miss", table)]
    query = RetrievalQuery(vectors=np.array([[1.0, 0.0]]), k=5)
    got = retrieve_top_k(facts, query, table)
    assert [i for i, _ in got] == [0]


def test_ties_break_by_kb_order():
    table = EmbeddingTable(dim=2, vectors={"a": [1.0, 0.0], "b": [1.0, 0.0]})
    facts = [make_fact("b", "b", "b", table), make_fact("a", "a", "a", table)]
    query = RetrievalQuery(vectors=np.array([[2.0, 0.0]]), k=2)
    got = retrieve_top_k(facts, query, table)
    assert [i for i, _ in got] == [0, 1]
    assert got[0][1] == pytest.approx(got[1][1])


def test_empty_query_warns_and_returns_nothing(caplog):
    table = EmbeddingTable(dim=2, vectors={"a": [1.0, 0.0]})
    facts = [make_fact("a", "a", "a", table)]
    query = RetrievalQuery(vectors=np.zeros((0, 2)), k=3)
    with caplog.at_level(logging.WARNING):
        assert retrieve_top_k(facts, query, table) == []
    assert any("empty retrieval query" in rec.message for rec in caplog.records)


def test_build_query_uses_entities_and_unique_labels():
    table = EmbeddingTable(dim=2, vectors={
        "cat": [1.0, 0.0], "mat": [0.0, 1.0], "dog": [1.0, 1.0],
    })
    facts = [make_fact("cat", "mat", "mat", table)]
    dets = [Detection("dog", (0, 0, 1, 1)), Detection("dog", (1, 1, 2, 2)),
            Detection("mat", (0, 0, 2, 2))]
    query = build_query("where is the cat", dets, facts, table, k=3)
    # one entity phrase (cat) + two distinct labels (dog, mat)
    assert query.num_vectors == 3
    np.testing.assert_allclose(query.vectors[0], [1.0, 0.0])


def test_build_query_empty_when_nothing_matches():
    table = EmbeddingTable(dim=2, vectors={"cat": [1.0, 0.0]})
    facts = [make_fact("cat", "cat", "cat", table)]
    query = build_query("what is happening", [], facts, table)
    assert query.num_vectors == 0


def test_retrieve_for_sample_end_to_end():
    table = EmbeddingTable(dim=2, vectors={
        "cat": [1.0, 0.1], "mat": [0.2, 1.0], "dog": [0.9, 0.4],
        "sits": [0.5, 0.5], "eats": [0.4, 0.6],
    })
    facts = [make_fact("cat", "sits", "mat", table),
             make_fact("dog", "eats", "mat", table)]
    dets = [Detection("cat", (0, 0, 1, 1))]
    got = retrieve_for_sample("where does the cat sit", dets, facts, table, k=1)
    assert len(got) == 1
    assert got[0][0] == 0  # the cat fact outranks the dog fact
