"""Candidate-fact retrieval.

Facts are ranked by the mean cosine similarity between every token vector in
the fact's triplet and every query vector. Query vectors come from entity
phrases matched in the question plus the deduplicated detection labels.
Facts that score exactly zero are dropped; the best k survive, ties broken by
knowledge-base order.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .data.datasets import Detection
from .data.embeddings import EmbeddingTable, embed_phrase, tokenize
from .data.kb import Fact, extract_question_entities

log = logging.getLogger(__name__)

DEFAULT_TOP_K = 5


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity, with zero vectors scoring 0 instead of NaN."""
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


@dataclass
class RetrievalQuery:
    """Phrase vectors to match facts against, and how many facts to keep."""

    vectors: np.ndarray  # (Q, dim); Q may be 0
    k: int = DEFAULT_TOP_K

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")

    @property
    def num_vectors(self) -> int:
        return int(self.vectors.shape[0])


def build_query(
    question: str,
    detections: list[Detection],
    facts: list[Fact],
    table: EmbeddingTable,
    k: int = DEFAULT_TOP_K,
) -> RetrievalQuery:
    """Embed the question's KB-entity mentions and the distinct detection
    labels into query vectors. Multi-word phrases contribute one mean vector
    each; repeated labels contribute once."""
    vecs: list[np.ndarray] = []
    q_tokens = tokenize(question)
    for phrase in extract_question_entities(q_tokens, facts):
        vecs.append(embed_phrase(table, phrase))
    seen: set[str] = set()
    for det in detections:
        if det.label in seen:
            continue
        seen.add(det.label)
        vecs.append(embed_phrase(table, tokenize(det.label)))
    if not vecs:
        return RetrievalQuery(vectors=np.zeros((0, table.dim)), k=k)
    return RetrievalQuery(vectors=np.stack(vecs), k=k)


def score_fact(fact: Fact, query: RetrievalQuery, table: EmbeddingTable) -> float:
    """Mean cosine between each fact token vector and each query vector.

    An empty query scores every fact 0.
    """
    if query.num_vectors == 0:
        return 0.0
    total = 0.0
    tokens = fact.tokens()
    for tok in tokens:
        tv = table.lookup(tok)
        for qv in query.vectors:
            total += cosine(tv, qv)
    return total / (len(tokens) * query.num_vectors)


def retrieve_top_k(facts: list[Fact], query: RetrievalQuery,
                   table: EmbeddingTable) -> list[tuple[int, float]]:
    """Pick the k best-scoring facts.

    Returns (index into ``facts``, score) pairs sorted by descending score,
    ties broken by ascending index. Zero-scoring facts never appear, so the
    result may be shorter than k or empty.
    """
    if query.num_vectors == 0:
        log.warning("empty retrieval query; every fact scores 0")
        return []
    scored = []
    for idx, fact in enumerate(facts):
        s = score_fact(fact, query, table)
        if s != 0.0:
            scored.append((idx, s))
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return scored[: query.k]


def retrieve_for_sample(
    question: str,
    detections: list[Detection],
    facts: list[Fact],
    table: EmbeddingTable,
    k: int = DEFAULT_TOP_K,
) -> list[tuple[int, float]]:
    """Convenience wrapper: build the query and retrieve in one call."""
    return retrieve_top_k(facts, build_query(question, detections, facts, table, k), table)
