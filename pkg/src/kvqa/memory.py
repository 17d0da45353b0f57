"""Key-value knowledge memory.

Retrieved facts become memory slots. In the full design each slot's key is
the mean vector over every token of the triplet and its value is the three
element vectors (subject, relation, object); reading first addresses slots
with the query, then blends the three value vectors per slot with weights
derived from the same query. Two reduced designs are kept for comparison:
``average`` reads back the transformed keys themselves, and ``kv`` uses a
subject+relation key with the object as the single value.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, ops
from .data.kb import Fact

log = logging.getLogger(__name__)

VARIANTS = ("proposed", "average", "kv")
VALUE_SLOTS = 3  # subject, relation, object


@dataclass
class KnowledgeMemory:
    """Raw (untransformed) slot arrays for one sample."""

    keys: np.ndarray  # (N, embed_dim)
    values: np.ndarray  # (N, J, embed_dim); J=3 except for the kv variant (J=1)
    variant: str
    sentinel: bool  # True when retrieval found nothing and a zero slot stands in
    fact_indices: list[int]  # KB indices per slot (-1 for the sentinel)
    fact_texts: list[str]

    @property
    def num_slots(self) -> int:
        return int(self.keys.shape[0])

    @property
    def num_value_slots(self) -> int:
        return int(self.values.shape[1])


def build_memory(
    facts: list[Fact],
    retrieved: list[tuple[int, float]],
    embed_dim: int,
    variant: str = "proposed",
) -> KnowledgeMemory:
    """Fill memory slots from retrieval results.

    ``retrieved`` holds (KB index, score) pairs. When it is empty the memory
    degrades to one all-zero slot so the reasoning loop still has something to
    address; a warning records the degradation.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown memory variant {variant!r}; expected one of {VARIANTS}")
    if not retrieved:
        log.warning("retrieval produced no facts; memory falls back to a zero slot")
        j = 1 if variant == "kv" else VALUE_SLOTS
        return KnowledgeMemory(
            keys=np.zeros((1, embed_dim)),
            values=np.zeros((1, j, embed_dim)),
            variant=variant,
            sentinel=True,
            fact_indices=[-1],
            fact_texts=["<empty>"],
        )
    picked = [facts[idx] for idx, _ in retrieved]
    if variant == "kv":
        keys = np.stack([(f.subject_vec + f.relation_vec) / 2.0 for f in picked])
        values = np.stack([f.object_vec for f in picked])[:, None, :]
    else:
        keys = np.stack([f.triplet_vec for f in picked])
        values = np.stack([f.element_vecs() for f in picked])
    return KnowledgeMemory(
        keys=keys,
        values=values,
        variant=variant,
        sentinel=False,
        fact_indices=[idx for idx, _ in retrieved],
        fact_texts=[f.as_text() for f in picked],
    )


@dataclass
class MemoryReadout:
    """Attention produced while reading: slot weights, per-slot value weights
    (None for the reduced designs), and the blended knowledge vector."""

    slot_attn: Tensor  # (N,)
    value_attn: Tensor | None  # (N, J)
    read: Tensor  # (mem_dim,)


def address_slots(query_hat: Tensor, key_hats: Tensor) -> Tensor:
    """Slot weights: softmax over query-key dot products. Sums to 1."""
    return ops.softmax(ops.matmul(key_hats, query_hat), axis=-1)


def value_weights(query_hat: Tensor, value_hats: Tensor) -> Tensor:
    """Per-slot value weights over the J element vectors.

    The weight of element j in slot i is (1 - softmax_j(query . value_ij))/2,
    an inverted distribution: elements that match the query least contribute
    most, which steers the readout toward the part of the triplet the
    question does not already mention. Each weight lies in [0, 0.5] and with
    J=3 each row sums to exactly 1.
    """
    n, j, _ = value_hats.shape
    flat = ops.reshape(value_hats, (n * j, value_hats.shape[2]))
    scores = ops.reshape(ops.matmul(flat, query_hat), (n, j))
    sm = ops.softmax(scores, axis=1)
    return ops.scale(1.0 - sm, 0.5)


def read_memory(query_hat: Tensor, key_hats: Tensor, value_hats: Tensor | None,
                variant: str) -> MemoryReadout:
    """Address the slots with the query and blend a knowledge vector.

    ``key_hats`` is (N, mem_dim); ``value_hats`` is (N, J, mem_dim) for the
    full design, (N, 1, mem_dim) for kv, and ignored for average.
    """
    p = address_slots(query_hat, key_hats)
    if variant == "average":
        return MemoryReadout(slot_attn=p, value_attn=None, read=ops.matmul(p, key_hats))
    if variant == "kv":
        n = value_hats.shape[0]
        vals = ops.reshape(value_hats, (n, value_hats.shape[2]))
        return MemoryReadout(slot_attn=p, value_attn=None, read=ops.matmul(p, vals))
    if variant != "proposed":
        raise ValueError(f"unknown memory variant {variant!r}; expected one of {VARIANTS}")
    s = value_weights(query_hat, value_hats)
    n, j, d = value_hats.shape
    # per-slot blended value: sum_j s[:, j] * value_hats[:, j, :]
    blended_parts = []
    for jj in range(j):
        w = ops.reshape(ops.index(s, (slice(None), jj)), (n, 1))
        blended_parts.append(ops.mul(w, ops.index(value_hats, (slice(None), jj))))
    blended = blended_parts[0]
    for part in blended_parts[1:]:
        blended = ops.add(blended, part)
    return MemoryReadout(slot_attn=p, value_attn=s, read=ops.matmul(p, blended))
