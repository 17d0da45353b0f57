"""Handcrafted benchmark-shaped fixture sets load, train, and evaluate.

Two 10-record fixture datasets mirror the two external formats the loaders
accept: one with a tab-separated triplet KB, one with structured JSONL fact
records carrying extra metadata. Both share a small embedding file that
covers every token they use.
"""

from pathlib import Path

import numpy as np
import pytest

from kvqa.data import AnswerVocab, load_embeddings, load_kb, load_samples
from kvqa.model import init_params, small_config
from kvqa.prepare import prepare_dataset
from kvqa.training import TrainConfig, evaluate, train

FIXTURES = Path(__file__).parent / "fixtures"

SETS = [
    ("krvqr_style_samples.jsonl", "krvqr_style_kb.tsv"),
    ("fvqa_style_samples.jsonl", "fvqa_style_kb.jsonl"),
]


def _load(samples_file, kb_file):
    table = load_embeddings(FIXTURES / "fixture_embeddings.txt")
    facts = load_kb(FIXTURES / kb_file, table)
    samples = load_samples(FIXTURES / samples_file)
    return table, facts, samples


@pytest.mark.parametrize("samples_file,kb_file", SETS)
def test_fixture_files_load_cleanly(samples_file, kb_file):
    table, facts, samples = _load(samples_file, kb_file)
    assert len(samples) == 10
    assert len(facts) == 10
    assert sum(s.split == "train" for s in samples) == 8
    assert sum(s.split == "val" for s in samples) == 2
    # every token is embedded: no silent out-of-vocabulary zeros
    for fact in facts:
        for tok in fact.tokens():
            assert tok in table, tok
    for sample in samples:
        for tok in sample.question.lower().split():
            assert tok in table, tok
        for det in sample.detections:
            assert 0.0 <= det.score <= 1.0
            assert det.width > 0 and det.height > 0
    # multi-word surface forms are present and survive tokenization
    assert any(len(f.subject) > 1 or len(f.object) > 1 or len(f.relation) > 1
               for f in facts)


@pytest.mark.parametrize("samples_file,kb_file", SETS)
def test_fixture_sets_train_one_epoch_and_evaluate(samples_file, kb_file):
    table, facts, samples = _load(samples_file, kb_file)
    train_samples = [s for s in samples if s.split == "train"]
    val_samples = [s for s in samples if s.split == "val"]
    vocab = AnswerVocab.from_samples(train_samples)
    config = small_config(num_classes=len(vocab), embed_dim=table.dim, steps=1,
                          hidden=4, mem_dim=8, graph_dim=8, graph_attn_width=4,
                          heads=2)
    prep = dict(top_k=3, num_neighbours=2)
    prep_train = prepare_dataset(train_samples, facts, table, vocab, **prep)
    prep_val = prepare_dataset(val_samples, facts, table, vocab, **prep)
    assert all(ps.memory.keys.shape[0] >= 1 for ps in prep_train)

    params = init_params(config, seed=0)
    result = train(params, config, prep_train, prep_val,
                   TrainConfig(epochs=1, batch_size=4, learning_rate=1e-3,
                               warmup_epochs=1, decay_epoch=2, seed=0))
    assert len(result.history) == 1
    assert np.isfinite(result.history[0].train_loss)

    report = evaluate(params, config, prep_val)
    assert report.count == 2
    assert 0.0 <= report.top1 <= report.top3 <= 1.0
