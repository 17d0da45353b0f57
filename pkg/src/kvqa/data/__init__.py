"""Data layer: word vectors, knowledge-base facts, and dataset records."""

from .datasets import (
    MAX_DETECTIONS,
    AnswerVocab,
    Detection,
    Sample,
    load_samples,
    sample_from_record,
    sample_to_record,
    save_samples,
)
from .embeddings import (
    EmbeddingTable,
    embed_phrase,
    load_embeddings,
    random_table,
    save_embeddings,
    tokenize,
)
from .kb import (
    DEFAULT_KB_ID,
    Fact,
    extract_question_entities,
    group_by_kb,
    kb_entity_forms,
    load_kb,
    make_fact,
    save_kb,
)
from .synthetic import (
    SyntheticData,
    SyntheticWorld,
    default_composites,
    generate_synthetic_dataset,
    solve_question,
    world_for_memory_variants,
    world_for_one_step_learning,
    world_for_two_step_gap,
)

__all__ = [
    "MAX_DETECTIONS",
    "AnswerVocab",
    "Detection",
    "Sample",
    "load_samples",
    "sample_from_record",
    "sample_to_record",
    "save_samples",
    "EmbeddingTable",
    "embed_phrase",
    "load_embeddings",
    "random_table",
    "save_embeddings",
    "tokenize",
    "DEFAULT_KB_ID",
    "Fact",
    "extract_question_entities",
    "group_by_kb",
    "kb_entity_forms",
    "load_kb",
    "make_fact",
    "save_kb",
    "SyntheticData",
    "SyntheticWorld",
    "default_composites",
    "generate_synthetic_dataset",
    "solve_question",
    "world_for_memory_variants",
    "world_for_one_step_learning",
    "world_for_two_step_gap",
]
