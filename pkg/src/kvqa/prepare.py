"""Per-sample precomputation.

Retrieval, memory construction, and graph construction do not depend on
learned parameters, so they run once per sample up front. The result bundles
every array the model's forward pass needs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data.datasets import AnswerVocab, Sample
from .data.embeddings import EmbeddingTable, tokenize
from .data.kb import Fact, group_by_kb
from .graph import SpatialGraph, build_graph
from .memory import KnowledgeMemory, build_memory
from .retrieval import DEFAULT_TOP_K, build_query, retrieve_top_k


@dataclass
class PreparedSample:
    """Everything the forward pass needs, precomputed as plain arrays."""

    question: str
    question_tokens: list[str]
    question_vecs: np.ndarray  # (S, embed_dim)
    memory: KnowledgeMemory
    graph: SpatialGraph
    answer: str
    answer_index: int  # -1 when the answer is outside the vocabulary
    question_type: str
    steps: int
    kb_id: str
    retrieved: list[tuple[int, float]]  # (index into the sample's fact pool, score)


def prepare_sample(
    sample: Sample,
    facts: list[Fact],
    table: EmbeddingTable,
    vocab: AnswerVocab,
    top_k: int = DEFAULT_TOP_K,
    num_neighbours: int = 5,
    memory_variant: str = "proposed",
) -> PreparedSample:
    """Precompute one sample against its fact pool.

    ``facts`` must already be the pool this sample queries (its kb_id group).
    """
    tokens = tokenize(sample.question)
    if not tokens:
        raise ValueError(f"sample has an empty question: {sample.question!r}")
    question_vecs = np.stack([table.lookup(tok) for tok in tokens])
    query = build_query(sample.question, sample.detections, facts, table, top_k)
    retrieved = retrieve_top_k(facts, query, table)
    memory = build_memory(facts, retrieved, table.dim, memory_variant)
    graph = build_graph(sample.detections, table, num_neighbours)
    return PreparedSample(
        question=sample.question,
        question_tokens=tokens,
        question_vecs=question_vecs,
        memory=memory,
        graph=graph,
        answer=sample.answer,
        answer_index=vocab.index(sample.answer),
        question_type=sample.question_type,
        steps=sample.steps,
        kb_id=sample.kb_id,
        retrieved=retrieved,
    )


def prepare_dataset(
    samples: list[Sample],
    facts: list[Fact],
    table: EmbeddingTable,
    vocab: AnswerVocab,
    top_k: int = DEFAULT_TOP_K,
    num_neighbours: int = 5,
    memory_variant: str = "proposed",
) -> list[PreparedSample]:
    """Prepare a whole split; facts are grouped by kb_id once."""
    pools = group_by_kb(facts)
    prepared = []
    for sample in samples:
        pool = pools.get(sample.kb_id)
        if pool is None:
            raise KeyError(f"sample references unknown kb_id {sample.kb_id!r}")
        prepared.append(prepare_sample(sample, pool, table, vocab, top_k,
                                       num_neighbours, memory_variant))
    return prepared
