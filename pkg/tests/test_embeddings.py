"""Embedding table behaviour: parsing, OOV policy, phrase averaging."""

import logging

import numpy as np
import pytest

from kvqa.data.embeddings import (
    EmbeddingTable,
    embed_phrase,
    load_embeddings,
    random_table,
    save_embeddings,
    tokenize,
)


def test_tokenize_lowercases_and_splits_on_whitespace():
    assert tokenize("What   IS\tthe Cat") == ["what", "is", "the", "cat"]
    assert tokenize("") == []


def test_table_lookup_and_membership():
    table = EmbeddingTable(dim=2, vectors={"cat": [1.0, 2.0]})
    assert "cat" in table
    assert "dog" not in table
    assert len(table) == 1
    np.testing.assert_array_equal(table.lookup("cat"), [1.0, 2.0])


def test_oov_lookup_returns_zeros_and_counts():
    table = EmbeddingTable(dim=3)
    assert table.oov_count == 0
    np.testing.assert_array_equal(table.lookup("ghost"), np.zeros(3))
    table.lookup("ghost")
    assert table.oov_count == 2


def test_add_rejects_wrong_length_vector():
    table = EmbeddingTable(dim=2)
    with pytest.raises(ValueError, match="length"):
        table.add("cat", [1.0, 2.0, 3.0])


def test_dim_must_be_positive():
    with pytest.raises(ValueError, match="positive"):
        EmbeddingTable(dim=0)


def test_load_embeddings_parses_tokens_and_vectors(tmp_path):
    path = tmp_path / "emb.txt"
    path.write_text("cat 1.0 2.0\ndog -0.5 0.25\n\n")
    table = load_embeddings(path)
    assert table.dim == 2
    assert len(table) == 2
    np.testing.assert_array_equal(table.lookup("dog"), [-0.5, 0.25])


def test_load_embeddings_dimension_mismatch_names_the_line(tmp_path):
    path = tmp_path / "emb.txt"
    path.write_text("cat 1.0 2.0\ndog 1.0 2.0 3.0\n")
    with pytest.raises(ValueError, match=r":2:"):
        load_embeddings(path)


def test_load_embeddings_malformed_float_names_the_line(tmp_path):
    path = tmp_path / "emb.txt"
    path.write_text("cat 1.0 2.0\ndog 1.0 oops\n")
    with pytest.raises(ValueError, match=r":2:.*float"):
        load_embeddings(path)


def test_load_embeddings_token_without_values_raises(tmp_path):
    path = tmp_path / "emb.txt"
    path.write_text("cat\n")
    with pytest.raises(ValueError, match="no vector values"):
        load_embeddings(path)


def test_load_embeddings_empty_file_raises(tmp_path):
    path = tmp_path / "emb.txt"
    path.write_text("\n\n")
    with pytest.raises(ValueError, match="empty"):
        load_embeddings(path)


def test_load_embeddings_keeps_first_duplicate_and_warns(tmp_path, caplog):
    path = tmp_path / "emb.txt"
    path.write_text("cat 1.0 2.0\ncat 9.0 9.0\n")
    with caplog.at_level(logging.WARNING):
        table = load_embeddings(path)
    np.testing.assert_array_equal(table.lookup("cat"), [1.0, 2.0])
    assert any("duplicate" in rec.message for rec in caplog.records)


def test_save_then_load_round_trips_exactly(tmp_path):
    table = EmbeddingTable(dim=3)
    rng = np.random.default_rng(0)
    for token in ("cat", "dog", "بقرة"):
        table.add(token, rng.standard_normal(3))
    path = tmp_path / "emb.txt"
    save_embeddings(path, table)
    back = load_embeddings(path)
    assert len(back) == 3
    for token in table.vectors:
        np.testing.assert_array_equal(back.lookup(token), table.lookup(token))


def test_embed_phrase_is_token_mean():
    table = EmbeddingTable(dim=2, vectors={"a": [1.0, 0.0], "b": [0.0, 3.0]})
    np.testing.assert_allclose(embed_phrase(table, ["a", "b"]), [0.5, 1.5])


def test_embed_phrase_oov_counts_in_divisor():
    table = EmbeddingTable(dim=2, vectors={"a": [2.0, 4.0]})
    np.testing.assert_allclose(embed_phrase(table, ["a", "ghost"]), [1.0, 2.0])


def test_embed_phrase_rejects_empty_token_list():
    with pytest.raises(ValueError, match="empty"):
        embed_phrase(EmbeddingTable(dim=2), [])


def test_random_table_unit_norm_and_deterministic():
    tokens = ["a", "b", "c"]
    t1 = random_table(tokens, dim=8, seed=42)
    t2 = random_table(tokens, dim=8, seed=42)
    t3 = random_table(tokens, dim=8, seed=43)
    for tok in tokens:
        assert np.linalg.norm(t1.lookup(tok)) == pytest.approx(1.0)
        np.testing.assert_array_equal(t1.lookup(tok), t2.lookup(tok))
    assert not np.array_equal(t1.lookup("a"), t3.lookup("a"))
