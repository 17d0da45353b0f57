"""Seeded synthetic worlds: scenes, mini knowledge bases, and questions.

Every sample gets its own small knowledge base (distinguished by ``kb_id``)
whose facts are randomly assembled from tiny token pools, so the mapping
from question to answer is only recoverable through the KB — a model that
ignores the memory can do no better than the answer prior. Question
families:

- ``object``   (1-step): "what is the R of the A"; answer = fact object.
- ``subject``  (1-step): "what has the O as R"; answer = fact subject.
- ``relation`` (1-step): "how does the S relate to the O"; answer = the
  relation token itself.
- ``chain``    (2-step): the answer requires chaining two facts. With
  ``chain_style="explicit"`` the question spells out both hops over facts
  (A, R1, M) and (M, R2, ans); with ``"composite"`` it names a single
  composed relation whose (R1, R2) expansion is fixed world-wide and must
  be learned; with ``confusable_chains`` the mini-KB also carries a decoy
  fact (D, R2, W) sharing the second-hop relation. With
  ``chain_style="selector"`` the question lists two candidate entities and
  a selector fact (A, picked, M) names the true one; both candidates carry
  a fact under the asked relation, so a single read blends the two
  possible answers — telling them apart requires first reading the
  selector fact and then re-reading the question under what it returned.

A symbolic solver (``solve_question``) recomputes every answer from the
question string and the KB alone; generation is correct iff the solver
agrees on all samples.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .datasets import AnswerVocab, Detection, Sample
from .embeddings import EmbeddingTable, random_table
from .kb import Fact, make_fact

TEMPLATE_TOKENS = ("what", "is", "the", "of", "has", "as", "how", "does", "relate", "to",
                   "or", "picked", "by")

FAMILIES = ("object", "subject", "relation", "chain")


def _default_entities(n: int) -> list[str]:
    return [f"ent{i}" for i in range(n)]


def _default_relations(n: int) -> list[str]:
    return [f"rel{i}" for i in range(n)]


def _default_fillers(n: int) -> list[str]:
    return [f"clutter{i}" for i in range(n)]


def default_composites(relations: list[str], count: int, seed: int) -> dict[str, tuple[str, str]]:
    """Fixed dictionary mapping each composed-relation token to a primitive
    relation pair; the pairs are distinct and deterministic in the seed."""
    if count < 1:
        return {}
    rng = np.random.default_rng(seed)
    pairs: list[tuple[str, str]] = []
    seen = set()
    guard = 0
    while len(pairs) < count:
        r1, r2 = rng.choice(len(relations), size=2, replace=False)
        pair = (relations[int(r1)], relations[int(r2)])
        if pair not in seen:
            seen.add(pair)
            pairs.append(pair)
        guard += 1
        if guard > 100 * count:
            raise ValueError(
                f"cannot build {count} distinct relation pairs from "
                f"{len(relations)} relations")
    return {f"relc{i}": pair for i, pair in enumerate(pairs)}


@dataclass
class SyntheticWorld:
    """Token pools, scene geometry, and mixing knobs for one generated task."""

    entities: list[str] = field(default_factory=lambda: _default_entities(16))
    relations: list[str] = field(default_factory=lambda: _default_relations(8))
    fillers: list[str] = field(default_factory=lambda: _default_fillers(6))
    composites: dict[str, tuple[str, str]] = field(default_factory=dict)
    embed_dim: int = 32
    seed: int = 0
    two_step_fraction: float = 0.565
    one_step_weights: dict[str, float] = field(
        default_factory=lambda: {"object": 0.7, "subject": 0.15, "relation": 0.15})
    chain_style: str = "explicit"  # or "composite" / "selector"
    confusable_chains: bool = False
    split_ratios: tuple[float, float, float] = (0.6, 0.2, 0.2)
    canvas: float = 100.0
    box_min: float = 8.0
    box_max: float = 20.0
    fillers_per_scene: int = 2

    def __post_init__(self) -> None:
        if not self.entities or not self.relations:
            raise ValueError("entity and relation pools must be non-empty")
        if len(self.entities) < 6:
            raise ValueError("need at least 6 entities to fill one mini-KB")
        if len(self.relations) < 4:
            raise ValueError("need at least 4 relations to fill one mini-KB")
        if len(set(self.entities) | set(self.relations) | set(self.fillers)) != (
                len(self.entities) + len(self.relations) + len(self.fillers)):
            raise ValueError("entity, relation and filler pools must be disjoint")
        if not 0.0 <= self.two_step_fraction <= 1.0:
            raise ValueError("two_step_fraction must lie in [0, 1]")
        if self.chain_style not in ("explicit", "composite", "selector"):
            raise ValueError(f"unknown chain style {self.chain_style!r}")
        if self.chain_style == "composite" and self.two_step_fraction > 0 and not self.composites:
            raise ValueError("composite chains need a non-empty composite dictionary")
        if abs(sum(self.split_ratios) - 1.0) > 1e-9:
            raise ValueError("split ratios must sum to 1")
        if self.two_step_fraction < 1.0:
            bad = set(self.one_step_weights) - set(FAMILIES)
            if bad or not self.one_step_weights:
                raise ValueError(f"bad one-step family weights: {self.one_step_weights}")
            if sum(self.one_step_weights.values()) <= 0:
                raise ValueError("one-step family weights must have positive mass")
        if self.fillers_per_scene > len(self.fillers):
            raise ValueError("fillers_per_scene exceeds the filler pool")

    @property
    def tokens(self) -> list[str]:
        return (list(self.entities) + list(self.relations) + list(self.fillers)
                + list(self.composites) + list(TEMPLATE_TOKENS))

    def build_table(self) -> EmbeddingTable:
        return random_table(self.tokens, dim=self.embed_dim, seed=self.seed)


def world_for_one_step_learning(seed: int = 0) -> SyntheticWorld:
    """Object-only questions; the answer is a uniform draw stored in the KB,
    so the no-knowledge baseline is pinned to the answer prior."""
    return SyntheticWorld(seed=seed, two_step_fraction=0.0,
                          one_step_weights={"object": 1.0})


def world_for_two_step_gap(seed: int = 0) -> SyntheticWorld:
    """Selector-chain questions only: the question lists two candidate
    entities, both carrying a fact under the asked relation, and a selector
    fact names the true one. A single read blends the two candidate answers
    (a coin flip at best); a second step can route the selector read back
    into the question attention and focus the named candidate."""
    return SyntheticWorld(
        seed=seed,
        two_step_fraction=1.0,
        chain_style="selector",
    )


def world_for_memory_variants(seed: int = 0) -> SyntheticWorld:
    """Subject- and relation-asking questions only; a memory whose values
    store just the fact object cannot express the answer."""
    return SyntheticWorld(seed=seed, two_step_fraction=0.0,
                          one_step_weights={"subject": 0.5, "relation": 0.5})


@dataclass
class SyntheticData:
    samples: list[Sample]
    facts: list[Fact]
    vocab: AnswerVocab
    table: EmbeddingTable
    world: SyntheticWorld

    def split(self, name: str) -> list[Sample]:
        if name not in ("train", "val", "test"):
            raise ValueError(f"unknown split {name!r}")
        return [s for s in self.samples if s.split == name]


def _sample_box(world: SyntheticWorld, rng: np.random.Generator) -> tuple[float, float, float, float]:
    w = float(rng.uniform(world.box_min, world.box_max))
    h = float(rng.uniform(world.box_min, world.box_max))
    x1 = float(rng.uniform(0.0, world.canvas - w))
    y1 = float(rng.uniform(0.0, world.canvas - h))
    return (x1, y1, x1 + w, y1 + h)


def _make_scene(world: SyntheticWorld, rng: np.random.Generator,
                labels: list[str]) -> list[Detection]:
    extra = [world.fillers[int(i)]
             for i in rng.choice(len(world.fillers), size=world.fillers_per_scene,
                                 replace=False)] if world.fillers_per_scene else []
    all_labels = list(labels) + extra
    order = rng.permutation(len(all_labels))
    return [Detection(label=all_labels[int(i)], box=_sample_box(world, rng))
            for i in order]


def _pick(rng: np.random.Generator, pool: list[str], n: int) -> list[str]:
    if n > len(pool):
        raise ValueError(f"mini-KB needs {n} distinct tokens, pool has {len(pool)}")
    idx = rng.choice(len(pool), size=n, replace=False)
    return [pool[int(i)] for i in idx]


def _gen_object(world, rng, table, kb_id):
    """(A, R, ans) plus a same-subject and an unrelated distractor; the
    relation is unique inside the mini-KB."""
    anchor, ans, e1, e2, e3 = _pick(rng, world.entities, 5)
    rel, rel2, rel3 = _pick(rng, world.relations, 3)
    facts = [
        make_fact(anchor, rel, ans, table, kb_id=kb_id),
        make_fact(anchor, rel2, e1, table, kb_id=kb_id),
        make_fact(e2, rel3, e3, table, kb_id=kb_id),
    ]
    question = f"what is the {rel} of the {anchor}"
    scene = _make_scene(world, rng, [anchor])
    return facts, scene, question, ans, "object", 1


def _gen_subject(world, rng, table, kb_id):
    """Answer is the fact SUBJECT; the question names the object and the
    relation, so an object-only memory value cannot carry the answer."""
    subj, obj, e1, e2, e3, e4 = _pick(rng, world.entities, 6)
    rel, rel2, rel3 = _pick(rng, world.relations, 3)
    facts = [
        make_fact(subj, rel, obj, table, kb_id=kb_id),
        make_fact(e1, rel2, e2, table, kb_id=kb_id),
        make_fact(e3, rel3, e4, table, kb_id=kb_id),
    ]
    question = f"what has the {obj} as {rel}"
    scene = _make_scene(world, rng, [obj])
    return facts, scene, question, subj, "subject", 1


def _gen_relation(world, rng, table, kb_id):
    """Answer is the RELATION token linking two named entities."""
    subj, obj, e1, e2, e3, e4 = _pick(rng, world.entities, 6)
    rel, rel2, rel3 = _pick(rng, world.relations, 3)
    facts = [
        make_fact(subj, rel, obj, table, kb_id=kb_id),
        make_fact(e1, rel2, e2, table, kb_id=kb_id),
        make_fact(e3, rel3, e4, table, kb_id=kb_id),
    ]
    question = f"how does the {subj} relate to the {obj}"
    scene = _make_scene(world, rng, [subj, obj])
    return facts, scene, question, rel, "relation", 1


def _gen_chain(world, rng, table, kb_id):
    """Two chained facts (A, R1, M), (M, R2, ans) plus distractors off both
    the anchor and the intermediate; R2 is unique inside the mini-KB and the
    intermediate M is visible in the scene while the answer is not.

    With ``confusable_chains`` the distractors are replaced by a single decoy
    (D, R2, W) that reuses the second-hop relation, and the decoy entity D is
    visible alongside the true intermediate. The question alone then scores
    (M, R2, ans) and (D, R2, W) identically — only a model that first
    resolves (A, R1, ?) can tell them apart.

    The ``selector`` style instead puts both candidate entities into the
    question in a random order: "what is the R2 of the M or the D picked by
    the A". The mini-KB holds (A, picked, M), (M, R2, ans), (D, R2, W). The
    two candidates are symmetric everywhere except in the selector fact, so
    the question alone leaves a coin flip between ans and W; resolving it
    requires reading (A, picked, ?) first and re-reading the question under
    the entity that came back."""
    if world.chain_style == "selector":
        anchor, mid, decoy, ans, wrong = _pick(rng, world.entities, 5)
        rel2 = world.relations[int(rng.integers(len(world.relations)))]
        first, second = (mid, decoy) if rng.random() < 0.5 else (decoy, mid)
        question = (f"what is the {rel2} of the {first} or the {second} "
                    f"picked by the {anchor}")
        facts = [
            make_fact(anchor, "picked", mid, table, kb_id=kb_id),
            make_fact(mid, rel2, ans, table, kb_id=kb_id),
            make_fact(decoy, rel2, wrong, table, kb_id=kb_id),
        ]
        scene = _make_scene(world, rng, [anchor, mid, decoy])
        return facts, scene, question, ans, "chain", 2
    if world.confusable_chains:
        anchor, mid, ans, decoy, wrong = _pick(rng, world.entities, 5)
    else:
        anchor, mid, ans, e1, e2 = _pick(rng, world.entities, 5)
    if world.chain_style == "composite":
        name = list(world.composites)[int(rng.integers(len(world.composites)))]
        rel1, rel2 = world.composites[name]
        others = [r for r in world.relations if r not in (rel1, rel2)]
        rel3, rel4 = _pick(rng, others, 2)
        question = f"what is the {name} of the {anchor}"
    else:
        rel1, rel2, rel3, rel4 = _pick(rng, world.relations, 4)
        question = f"what is the {rel2} of the {rel1} of the {anchor}"
    facts = [
        make_fact(anchor, rel1, mid, table, kb_id=kb_id),
        make_fact(mid, rel2, ans, table, kb_id=kb_id),
    ]
    if world.confusable_chains:
        facts.append(make_fact(decoy, rel2, wrong, table, kb_id=kb_id))
        scene = _make_scene(world, rng, [anchor, mid, decoy])
    else:
        facts.append(make_fact(anchor, rel3, e1, table, kb_id=kb_id))
        facts.append(make_fact(mid, rel4, e2, table, kb_id=kb_id))
        scene = _make_scene(world, rng, [anchor, mid])
    return facts, scene, question, ans, "chain", 2


_GENERATORS = {
    "object": _gen_object,
    "subject": _gen_subject,
    "relation": _gen_relation,
    "chain": _gen_chain,
}


def _draw_family(world: SyntheticWorld, rng: np.random.Generator) -> str:
    if rng.random() < world.two_step_fraction:
        return "chain"
    names = sorted(world.one_step_weights)
    weights = np.array([world.one_step_weights[n] for n in names], dtype=np.float64)
    weights /= weights.sum()
    return names[int(rng.choice(len(names), p=weights))]


def generate_synthetic_dataset(world: SyntheticWorld, n: int) -> SyntheticData:
    """Generate ``n`` samples with per-sample mini-KBs, split into
    train/val/test by the world's ratios. Deterministic in ``world.seed``."""
    if n < 1:
        raise ValueError(f"sample count must be positive, got {n}")
    rng = np.random.default_rng(world.seed)
    table = world.build_table()
    samples: list[Sample] = []
    facts: list[Fact] = []
    for i in range(n):
        family = _draw_family(world, rng)
        kb_id = f"kb-{i:05d}"
        kb_facts, scene, question, answer, qtype, steps = _GENERATORS[family](
            world, rng, table, kb_id)
        facts.extend(kb_facts)
        samples.append(Sample(
            question=question,
            detections=scene,
            answer=answer,
            kb_id=kb_id,
            question_type=qtype,
            steps=steps,
            meta={"family": family},
        ))
    order = rng.permutation(n)
    n_train = int(round(world.split_ratios[0] * n))
    n_val = int(round(world.split_ratios[1] * n))
    for pos, idx in enumerate(order):
        if pos < n_train:
            samples[int(idx)].split = "train"
        elif pos < n_train + n_val:
            samples[int(idx)].split = "val"
        else:
            samples[int(idx)].split = "test"
    vocab = AnswerVocab.from_samples([s for s in samples if s.split == "train"])
    return SyntheticData(samples=samples, facts=facts, vocab=vocab,
                         table=table, world=world)


# Symbolic solver ----------------------------------------------------------


def _unique(candidates: list[str], what: str) -> str:
    distinct = sorted(set(candidates))
    if len(distinct) != 1:
        raise ValueError(f"expected exactly one {what}, found {distinct}")
    return distinct[0]


def solve_question(sample: Sample, facts: list[Fact],
                   composites: dict[str, tuple[str, str]] | None = None) -> str:
    """Answer a generated question by direct KB lookup, independent of any
    learned machinery. Raises if the question fits no template or the KB
    does not determine a unique answer."""
    words = sample.question.split()
    simple = [(" ".join(f.subject), " ".join(f.relation), " ".join(f.object))
              for f in facts if f.kb_id == sample.kb_id]

    def objects_of(subj: str, rel: str) -> list[str]:
        return [o for s, r, o in simple if s == subj and r == rel]

    # "what is the R2 of the X or the Y picked by the A"  (selector two-step)
    if (len(words) == 14 and words[:3] == ["what", "is", "the"]
            and words[4:6] == ["of", "the"] and words[7] == "or"
            and words[8] == "the" and words[10:13] == ["picked", "by", "the"]):
        rel2, first, second, anchor = words[3], words[6], words[9], words[13]
        mid = _unique(objects_of(anchor, "picked"), f"selection by {anchor}")
        if mid not in (first, second):
            raise ValueError(
                f"selected entity {mid!r} is not among the candidates "
                f"{first!r}, {second!r}")
        return _unique(objects_of(mid, rel2), f"hop for {mid}/{rel2}")
    # "what is the R2 of the R1 of the A"  (explicit two-step)
    if (len(words) == 10 and words[:3] == ["what", "is", "the"]
            and words[4:6] == ["of", "the"] and words[7:9] == ["of", "the"]):
        rel2, rel1, anchor = words[3], words[6], words[9]
        mid = _unique(objects_of(anchor, rel1), f"hop for {anchor}/{rel1}")
        return _unique(objects_of(mid, rel2), f"hop for {mid}/{rel2}")
    # "what is the R of the A"  (object query or composite two-step)
    if len(words) == 7 and words[:3] == ["what", "is", "the"] and words[4:6] == ["of", "the"]:
        rel, anchor = words[3], words[6]
        if composites and rel in composites:
            rel1, rel2 = composites[rel]
            mid = _unique(objects_of(anchor, rel1), f"hop for {anchor}/{rel1}")
            return _unique(objects_of(mid, rel2), f"hop for {mid}/{rel2}")
        return _unique(objects_of(anchor, rel), f"object for {anchor}/{rel}")
    # "what has the O as R"
    if len(words) == 6 and words[:3] == ["what", "has", "the"] and words[4] == "as":
        obj, rel = words[3], words[5]
        subs = [s for s, r, o in simple if r == rel and o == obj]
        return _unique(subs, f"subject for {rel}/{obj}")
    # "how does the S relate to the O"
    if (len(words) == 8 and words[:3] == ["how", "does", "the"]
            and words[4:7] == ["relate", "to", "the"]):
        subj, obj = words[3], words[7]
        rels = [r for s, r, o in simple if s == subj and o == obj]
        return _unique(rels, f"relation for {subj}/{obj}")
    raise ValueError(f"question fits no known template: {sample.question!r}")
