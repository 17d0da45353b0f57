"""Knowledge-base facts: loading, serialization, question-entity matching.

A fact is a subject/relation/object triplet of token sequences. Each element
gets a mean word vector, and the whole triplet gets the mean over all of its
tokens, which later becomes the memory key.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .embeddings import EmbeddingTable, embed_phrase, tokenize

log = logging.getLogger(__name__)

DEFAULT_KB_ID = "default"


@dataclass
class Fact:
    """One (subject, relation, object) triplet with precomputed embeddings."""

    subject: list[str]
    relation: list[str]
    object: list[str]
    subject_vec: np.ndarray = field(repr=False, default=None)
    relation_vec: np.ndarray = field(repr=False, default=None)
    object_vec: np.ndarray = field(repr=False, default=None)
    triplet_vec: np.ndarray = field(repr=False, default=None)  # mean over all tokens
    kb_id: str = DEFAULT_KB_ID

    def tokens(self) -> list[str]:
        return self.subject + self.relation + self.object

    def element_vecs(self) -> np.ndarray:
        return np.stack([self.subject_vec, self.relation_vec, self.object_vec])

    def as_text(self) -> str:
        return " | ".join(" ".join(part) for part in (self.subject, self.relation, self.object))


def make_fact(subject: str, relation: str, obj: str, table: EmbeddingTable,
              kb_id: str = DEFAULT_KB_ID) -> Fact:
    s, r, o = tokenize(subject), tokenize(relation), tokenize(obj)
    if not (s and r and o):
        raise ValueError(f"fact has an empty element: {(subject, relation, obj)!r}")
    all_tokens = s + r + o
    return Fact(
        subject=s,
        relation=r,
        object=o,
        subject_vec=embed_phrase(table, s),
        relation_vec=embed_phrase(table, r),
        object_vec=embed_phrase(table, o),
        triplet_vec=embed_phrase(table, all_tokens),
        kb_id=kb_id,
    )


def load_kb(path, table: EmbeddingTable) -> list[Fact]:
    """Load facts from a TSV (``subject<TAB>relation<TAB>object``) or a JSONL
    file of ``{"subject","relation","object"[,"kb_id"]}`` records.

    Embeddings are computed against ``table`` during loading. An empty file
    yields an empty KB with a warning.
    """
    path = str(path)
    facts: list[Fact] = []
    with open(path, encoding="utf-8") as fh:
        for recno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if line.lstrip().startswith("{"):
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ValueError(f"{path}: record {recno}: bad JSON ({exc})") from None
                missing = [k for k in ("subject", "relation", "object") if k not in rec]
                if missing:
                    raise ValueError(f"{path}: record {recno}: missing fields {missing}")
                facts.append(make_fact(rec["subject"], rec["relation"], rec["object"],
                                       table, kb_id=rec.get("kb_id", DEFAULT_KB_ID)))
            else:
                parts = line.split("\t")
                if len(parts) != 3:
                    raise ValueError(
                        f"{path}: record {recno}: expected 3 tab-separated fields, got {len(parts)}"
                    )
                facts.append(make_fact(parts[0], parts[1], parts[2], table))
    if not facts:
        log.warning("%s: empty knowledge base", path)
    return facts


def save_kb(path, facts: list[Fact]) -> None:
    """Write facts as JSONL (keeps kb_id); reloading yields identical facts."""
    with open(path, "w", encoding="utf-8") as fh:
        for fact in facts:
            rec = {
                "subject": " ".join(fact.subject),
                "relation": " ".join(fact.relation),
                "object": " ".join(fact.object),
                "kb_id": fact.kb_id,
            }
            fh.write(json.dumps(rec) + "\n")


def group_by_kb(facts: list[Fact]) -> dict[str, list[Fact]]:
    pool: dict[str, list[Fact]] = {}
    for fact in facts:
        pool.setdefault(fact.kb_id, []).append(fact)
    return pool


def kb_entity_forms(facts: list[Fact]) -> list[tuple[str, ...]]:
    """Distinct entity surface forms (subjects and objects) in the KB."""
    forms = {tuple(f.subject) for f in facts} | {tuple(f.object) for f in facts}
    return sorted(forms)


def extract_question_entities(question_tokens: list[str], facts: list[Fact]) -> list[list[str]]:
    """Match KB entity surface forms against the question.

    Greedy longest-match-first, non-overlapping: 'computer mouse' wins over
    'mouse' wherever both apply. Matches are returned in question order.
    """
    forms = kb_entity_forms(facts)
    by_len = sorted(forms, key=len, reverse=True)
    n = len(question_tokens)
    taken = [False] * n
    matches: list[tuple[int, list[str]]] = []
    for form in by_len:
        width = len(form)
        if width == 0 or width > n:
            continue
        start = 0
        while start + width <= n:
            window = tuple(question_tokens[start:start + width])
            if window == form and not any(taken[start:start + width]):
                for k in range(start, start + width):
                    taken[k] = True
                matches.append((start, list(form)))
                start += width
            else:
                start += 1
    matches.sort(key=lambda m: m[0])
    return [form for _, form in matches]
