"""Acceptance suite: every shipped guarantee as one pass/fail test.

Each test here states a quantitative promise about the package — gradient
fidelity, normalization, oracle equivalence, geometric invariance, seeded
learning results, determinism, and external-format compatibility — and
asserts it at the promised tolerance. The slow tests train real models on
generated tasks and print their per-seed numbers; expect the whole file to
take well over an hour on one laptop core.

Brute-force oracles are imported from the sibling module tests, where they
are defined independently of the shipped code paths they check.
"""

import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from test_graph import oracle_knn, random_layout, scale, translate
from test_memory import oracle_read
from test_model import oracle_forward, random_instance, tiny_config
from test_retrieval import oracle_top_k

from kvqa.autodiff import Tensor, grad_check, use_precision
from kvqa.data import (
    AnswerVocab,
    generate_synthetic_dataset,
    load_embeddings,
    load_kb,
    load_samples,
    world_for_memory_variants,
    world_for_one_step_learning,
    world_for_two_step_gap,
)
from kvqa.data.embeddings import random_table
from kvqa.data.kb import make_fact
from kvqa.graph import nearest_neighbours, relative_spatial_vector
from kvqa.memory import read_memory
from kvqa.model import (
    EDGE_SOFTMAX_MODES,
    VARIANTS,
    init_params,
    run_model,
    sample_loss,
    small_config,
)
from kvqa.prepare import prepare_dataset
from kvqa.retrieval import RetrievalQuery, retrieve_top_k
from kvqa.training import TrainConfig, evaluate, train

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(autouse=True)
def _full_precision():
    """Start and leave every test in 64-bit mode; the training tests switch
    to 32-bit themselves and this puts the mode back afterwards."""
    use_precision("test")
    yield
    use_precision("test")


# ---------------------------------------------------------------------------
# Gradient fidelity of the complete model graph
# ---------------------------------------------------------------------------


def test_full_model_gradients_match_finite_differences():
    """Central differences over every parameter of a full forward + loss
    (4-token question, 2 memory slots, 3 objects, 2 steps, dropout off)
    agree with the reverse pass to a relative error below 1e-5, in under
    a minute."""
    cfg = tiny_config()  # 2 steps, dropout 0.0, element-wise memory
    params = init_params(cfg, seed=3)
    rng = np.random.default_rng(0)
    inst = random_instance(rng, cfg, s_len=4, slots=2, m=3)

    def loss_fn():
        return sample_loss(run_model(params, cfg, **inst), answer_index=2)

    # Central differences on a loss of order one carry roundoff noise near
    # eps * |loss| / h ~ 4e-11, so coordinates whose gradients sit below
    # 4e-11 / 1e-5 = 4e-6 cannot be verified in relative terms at all;
    # the floor reports them as inactive instead of comparing noise.
    start = time.perf_counter()
    report = grad_check(loss_fn, params, active_floor=1e-5)
    elapsed = time.perf_counter() - start
    print(f"full-graph grad check: max_rel_error={report.max_rel_error:.3e} "
          f"over {len(report.params)} parameters in {elapsed:.1f}s")
    assert report.passed(1e-5), report.summary()
    assert elapsed < 60.0


# ---------------------------------------------------------------------------
# Normalization of every attention distribution
# ---------------------------------------------------------------------------


def test_attention_distributions_normalize_and_element_weights_stay_bounded():
    """On 1000 random instances spanning all memory variants and both edge
    softmax modes: question, slot, node, and edge attention each sum to
    1 ± 1e-6, inverted element-weight rows sum to 1 ± 1e-6, and every
    element weight lies in [0, 0.5]. Runs in under a minute."""
    rng = np.random.default_rng(5)
    cache = {}
    start = time.perf_counter()
    for i in range(1000):
        variant = VARIANTS[i % len(VARIANTS)]
        mode = EDGE_SOFTMAX_MODES[i % len(EDGE_SOFTMAX_MODES)]
        if (variant, mode) not in cache:
            cfg = tiny_config(memory_variant=variant, edge_softmax=mode)
            cache[variant, mode] = (cfg, init_params(cfg, seed=len(cache)))
        cfg, params = cache[variant, mode]
        out = run_model(params, cfg, **random_instance(rng, cfg))
        for st in out.steps:
            assert abs(st.question_attn.numpy().sum() - 1.0) <= 1e-6
            assert abs(st.memory.slot_attn.numpy().sum() - 1.0) <= 1e-6
            if variant == "proposed":
                s = st.memory.value_attn.numpy()
                assert np.all(s >= 0.0) and np.all(s <= 0.5)
                assert np.max(np.abs(s.sum(axis=1) - 1.0)) <= 1e-6
            assert abs(st.node_attn.numpy().sum() - 1.0) <= 1e-6
            if st.edge_attn is not None:
                e = st.edge_attn.numpy()
                if mode == "global":
                    assert abs(e.sum() - 1.0) <= 1e-6
                else:
                    assert np.max(np.abs(e.sum(axis=1) - 1.0)) <= 1e-6
    elapsed = time.perf_counter() - start
    print(f"normalization suite: 1000 instances in {elapsed:.1f}s")
    assert elapsed < 60.0


# ---------------------------------------------------------------------------
# Brute-force oracle equivalence of each pipeline stage
# ---------------------------------------------------------------------------


def test_retrieval_adjacency_readout_and_graph_update_match_brute_force():
    """Fact ranking, neighbour selection, the memory readout, and the
    reasoning-conditioned graph update (checked through its attention,
    updated-node pooling, and logits) each agree with an independently
    written brute-force implementation on 100 random instances to 1e-8."""
    rng = np.random.default_rng(11)

    # fact retrieval against a double-loop full-sort ranking
    tokens = [f"tok{i}" for i in range(20)]
    table = random_table(tokens, dim=8, seed=2)
    for _ in range(100):
        facts = []
        for _ in range(12):
            s, r, o = rng.choice(len(tokens), size=3)
            facts.append(make_fact(f"tok{s}", f"tok{r}", f"tok{o}", table))
        qvecs = rng.standard_normal((2, 8))
        got = retrieve_top_k(facts, RetrievalQuery(vectors=qvecs, k=4), table)
        want = oracle_top_k(facts, qvecs, table, 4)
        assert [i for i, _ in got] == [i for i, _ in want]
        assert max((abs(g - w) for (_, g), (_, w) in zip(got, want)), default=0.0) <= 1e-8

    # neighbour lists against a brute-force double loop
    for _ in range(100):
        dets = random_layout(rng, int(rng.integers(2, 8)))
        k = int(rng.integers(1, 5))
        assert nearest_neighbours(dets, k) == oracle_knn(dets, k)

    # memory readout against a plain-numpy re-derivation
    for trial in range(100):
        variant = VARIANTS[trial % len(VARIANTS)]
        n, d = int(rng.integers(1, 7)), int(rng.integers(5, 10))
        j = 1 if variant == "kv" else 3
        query = rng.standard_normal(d)
        keys = rng.standard_normal((n, d))
        values = rng.standard_normal((n, j, d))
        out = read_memory(Tensor(query), Tensor(keys), Tensor(values), variant)
        p, s, read = oracle_read(query, keys, values, variant)
        assert np.max(np.abs(out.slot_attn.numpy() - p)) <= 1e-8
        assert np.max(np.abs(out.read.numpy() - read)) <= 1e-8
        if variant == "proposed":
            assert np.max(np.abs(out.value_attn.numpy() - s)) <= 1e-8

    # graph update (and the full surrounding pass) against the numpy oracle
    combos = [(v, m) for v in VARIANTS for m in EDGE_SOFTMAX_MODES]
    for trial in range(100):
        variant, mode = combos[trial % len(combos)]
        cfg = tiny_config(memory_variant=variant, edge_softmax=mode)
        params = init_params(cfg, seed=trial)
        w = {name: t.data for name, t in params.items()}
        inst = random_instance(rng, cfg)
        out = run_model(params, cfg, **inst)
        want_logits, want_trace = oracle_forward(w, cfg, **inst)
        assert np.max(np.abs(out.logits.numpy() - want_logits)) <= 1e-8
        for st, ref in zip(out.steps, want_trace):
            assert np.max(np.abs(st.node_attn.numpy() - ref["n_attn"])) <= 1e-8
            assert np.max(np.abs(st.pooled.numpy() - ref["pooled"])) <= 1e-8
            if ref["e_attn"] is not None:
                assert np.max(np.abs(st.edge_attn.numpy() - ref["e_attn"])) <= 1e-8


# ---------------------------------------------------------------------------
# Relative-geometry identities and exact invariance
# ---------------------------------------------------------------------------


def test_self_geometry_translation_and_scale_invariance_are_exact():
    """Every box paired with itself encodes [0, 0, 1, 1, 1]; integer
    translations and power-of-two uniform scalings change neither the
    relative vectors nor the neighbour lists, bit for bit, on 100 random
    layouts."""
    rng = np.random.default_rng(21)
    identity = np.array([0.0, 0.0, 1.0, 1.0, 1.0])
    for _ in range(100):
        m = int(rng.integers(2, 8))
        dets = random_layout(rng, m)
        k = int(rng.integers(1, m))
        base_nbrs = nearest_neighbours(dets, k)
        base_vecs = np.stack([relative_spatial_vector(a, b)
                              for a in dets for b in dets])
        assert np.array_equal(relative_spatial_vector(dets[0], dets[0]), identity)

        tx, ty = float(rng.integers(-300, 300)), float(rng.integers(-300, 300))
        moved = [translate(d, tx, ty) for d in dets]
        factor = float(rng.choice([0.5, 2.0, 4.0]))
        grown = [scale(d, factor) for d in dets]
        for variant in (moved, grown):
            assert nearest_neighbours(variant, k) == base_nbrs
            vecs = np.stack([relative_spatial_vector(a, b)
                             for a in variant for b in variant])
            assert np.array_equal(vecs, base_vecs)


# ---------------------------------------------------------------------------
# Seeded synthetic-task results
# ---------------------------------------------------------------------------


def _prepared_task(world_factory, n=2500):
    world = replace(world_factory(seed=0), split_ratios=(0.8, 0.2, 0.0))
    data = generate_synthetic_dataset(world, n)
    prep_train = prepare_dataset(data.split("train"), data.facts, data.table, data.vocab)
    prep_val = prepare_dataset(data.split("val"), data.facts, data.table, data.vocab)
    return data, prep_train, prep_val


def _train_arm(data, prep_train, prep_val, *, steps, seed, epochs,
               memory_variant="proposed", knowledge_guided=True,
               stop_at=None):
    cfg = small_config(num_classes=len(data.vocab), embed_dim=data.world.embed_dim,
                       steps=steps, mem_dim=32, memory_variant=memory_variant)
    tcfg = TrainConfig(epochs=epochs, batch_size=16, learning_rate=3e-3,
                       warmup_epochs=2, decay_epoch=20, precision="train",
                       seed=seed, knowledge_guided=knowledge_guided,
                       stop_at_val_top1=stop_at)
    params = init_params(cfg, seed=seed)
    start = time.perf_counter()
    result = train(params, cfg, prep_train, prep_val, tcfg)
    return result, time.perf_counter() - start


def test_one_step_task_reaches_95_percent_and_knowledge_ablation_fails_it():
    """Single-hop questions whose answers exist only in the KB: with one
    reasoning step the model reaches at least 0.95 validation top-1 within
    30 epochs on each of three seeds (under 15 minutes per seed); training
    the same model with the memory read zeroed stays below 0.80."""
    use_precision("train")
    data, prep_train, prep_val = _prepared_task(world_for_one_step_learning)
    assert len(prep_train) == 2000 and len(prep_val) == 500
    for seed in (0, 1, 2):
        result, elapsed = _train_arm(data, prep_train, prep_val,
                                     steps=1, seed=seed, epochs=30, stop_at=0.95)
        print(f"one-step learning: seed={seed} best={result.best_val_top1:.3f} "
              f"@ep{result.best_epoch} ({elapsed:.0f}s)")
        assert result.best_val_top1 >= 0.95
        assert elapsed < 900.0
    ablated, elapsed = _train_arm(data, prep_train, prep_val,
                                  steps=1, seed=0, epochs=30, knowledge_guided=False)
    print(f"one-step learning: knowledge-ablated best={ablated.best_val_top1:.3f} "
          f"({elapsed:.0f}s)")
    assert ablated.best_val_top1 < 0.80


def test_two_reasoning_steps_beat_one_on_selector_chains():
    """Selector-chain questions leave a single memory read a coin flip
    between two candidate answers; a second step can resolve the selector.
    Mean validation top-1 with two steps exceeds one step by at least
    0.10 across three seeds."""
    use_precision("train")
    data, prep_train, prep_val = _prepared_task(world_for_two_step_gap)
    bests = {1: [], 2: []}
    for steps in (2, 1):
        for seed in (0, 1, 2):
            result, elapsed = _train_arm(data, prep_train, prep_val,
                                         steps=steps, seed=seed, epochs=25)
            print(f"two-step gap: T={steps} seed={seed} "
                  f"best={result.best_val_top1:.3f} @ep{result.best_epoch} "
                  f"({elapsed:.0f}s)")
            bests[steps].append(result.best_val_top1)
    gap = float(np.mean(bests[2]) - np.mean(bests[1]))
    print(f"two-step gap: mean T=2 {np.mean(bests[2]):.3f} "
          f"mean T=1 {np.mean(bests[1]):.3f} gap {gap:.3f}")
    assert gap >= 0.10


def test_element_wise_memory_beats_object_only_values():
    """Questions asking for a fact's subject or relation: a memory whose
    values store all three triplet elements beats the object-only
    key-value layout by at least 0.10 mean validation top-1 over three
    seeds, because an object-only value cannot express those answers."""
    use_precision("train")
    world = replace(world_for_memory_variants(seed=0), split_ratios=(0.8, 0.2, 0.0))
    data = generate_synthetic_dataset(world, 2500)
    means = {}
    for variant in ("proposed", "kv"):
        prep_train = prepare_dataset(data.split("train"), data.facts, data.table,
                                     data.vocab, memory_variant=variant)
        prep_val = prepare_dataset(data.split("val"), data.facts, data.table,
                                   data.vocab, memory_variant=variant)
        bests = []
        for seed in (0, 1, 2):
            result, elapsed = _train_arm(data, prep_train, prep_val,
                                         steps=1, seed=seed, epochs=20,
                                         memory_variant=variant)
            print(f"memory variants: {variant} seed={seed} "
                  f"best={result.best_val_top1:.3f} @ep{result.best_epoch} "
                  f"({elapsed:.0f}s)")
            bests.append(result.best_val_top1)
        means[variant] = float(np.mean(bests))
    gap = means["proposed"] - means["kv"]
    print(f"memory variants: proposed {means['proposed']:.3f} "
          f"kv {means['kv']:.3f} gap {gap:.3f}")
    assert gap >= 0.10


# ---------------------------------------------------------------------------
# Determinism
# ---------------------------------------------------------------------------


def test_same_seed_gives_bit_identical_loss_and_report():
    """Two runs from the same seed produce the same epoch-1 training loss
    down to the last bit and byte-identical evaluation reports."""
    use_precision("train")
    world = replace(world_for_one_step_learning(seed=0),
                    split_ratios=(0.7, 0.3, 0.0))
    data = generate_synthetic_dataset(world, 120)
    prep_train = prepare_dataset(data.split("train"), data.facts, data.table,
                                 data.vocab, top_k=3, num_neighbours=2)
    prep_val = prepare_dataset(data.split("val"), data.facts, data.table,
                               data.vocab, top_k=3, num_neighbours=2)
    cfg = small_config(num_classes=len(data.vocab), embed_dim=data.world.embed_dim,
                       steps=2, hidden=4, mem_dim=8, graph_dim=8,
                       graph_attn_width=4, heads=2)
    tcfg = TrainConfig(epochs=1, batch_size=8, learning_rate=1e-3,
                       warmup_epochs=1, decay_epoch=2, precision="train", seed=5)
    runs = []
    for _ in range(2):
        params = init_params(cfg, seed=5)
        result = train(params, cfg, prep_train, prep_val, tcfg)
        report = evaluate(params, cfg, prep_val)
        runs.append((result.history[0].train_loss, report.to_dict()))
    (loss_a, report_a), (loss_b, report_b) = runs
    print(f"determinism: epoch-1 loss {loss_a!r} (both runs)")
    assert loss_a == loss_b
    assert report_a == report_b


# ---------------------------------------------------------------------------
# External-format compatibility
# ---------------------------------------------------------------------------


def test_benchmark_shaped_fixtures_load_train_and_evaluate():
    """Both handcrafted fixture sets — one with a tab-separated KB, one with
    JSONL fact records — load, train one epoch, and evaluate cleanly."""
    for samples_file, kb_file in (("krvqr_style_samples.jsonl", "krvqr_style_kb.tsv"),
                                  ("fvqa_style_samples.jsonl", "fvqa_style_kb.jsonl")):
        table = load_embeddings(FIXTURES / "fixture_embeddings.txt")
        facts = load_kb(FIXTURES / kb_file, table)
        samples = load_samples(FIXTURES / samples_file)
        assert len(samples) == 10 and len(facts) == 10
        train_samples = [s for s in samples if s.split == "train"]
        val_samples = [s for s in samples if s.split == "val"]
        vocab = AnswerVocab.from_samples(train_samples)
        cfg = small_config(num_classes=len(vocab), embed_dim=table.dim, steps=1,
                           hidden=4, mem_dim=8, graph_dim=8, graph_attn_width=4,
                           heads=2)
        prep_train = prepare_dataset(train_samples, facts, table, vocab,
                                     top_k=3, num_neighbours=2)
        prep_val = prepare_dataset(val_samples, facts, table, vocab,
                                   top_k=3, num_neighbours=2)
        params = init_params(cfg, seed=0)
        result = train(params, cfg, prep_train, prep_val,
                       TrainConfig(epochs=1, batch_size=4, learning_rate=1e-3,
                                   warmup_epochs=1, decay_epoch=2, seed=0))
        assert np.isfinite(result.history[0].train_loss)
        report = evaluate(params, cfg, prep_val)
        print(f"format compatibility: {samples_file} -> {report.summary()!s}")
        assert report.count == 2
        assert 0.0 <= report.top1 <= report.top3 <= 1.0
