"""Word-embedding table: loading, phrase averaging, OOV accounting."""

from __future__ import annotations

import logging

import numpy as np

log = logging.getLogger(__name__)


def tokenize(text: str) -> list[str]:
    """Lowercase whitespace tokenization; the only tokenizer in this package."""
    return text.lower().split()


class EmbeddingTable:
    """Token -> vector map with a zero-vector out-of-vocabulary policy.

    OOV lookups return the zero vector and are tallied in ``oov_count`` so
    data problems surface in logs instead of silently degrading retrieval.
    """

    def __init__(self, dim: int, vectors: dict[str, np.ndarray] | None = None):
        if dim < 1:
            raise ValueError(f"embedding dim must be positive, got {dim}")
        self.dim = dim
        self.vectors: dict[str, np.ndarray] = {}
        self.oov_count = 0
        self._zero = np.zeros(dim, dtype=np.float64)
        if vectors:
            for token, vec in vectors.items():
                self.add(token, vec)

    def add(self, token: str, vector) -> None:
        vec = np.asarray(vector, dtype=np.float64)
        if vec.shape != (self.dim,):
            raise ValueError(
                f"vector for {token!r} has length {vec.shape}, expected ({self.dim},)"
            )
        self.vectors[token] = vec

    def __contains__(self, token: str) -> bool:
        return token in self.vectors

    def __len__(self) -> int:
        return len(self.vectors)

    def lookup(self, token: str) -> np.ndarray:
        vec = self.vectors.get(token)
        if vec is None:
            self.oov_count += 1
            return self._zero
        return vec


def load_embeddings(path) -> EmbeddingTable:
    """Parse a text embedding file: one ``token v1 v2 ... vD`` line per entry.

    The first line fixes the dimension. Duplicate tokens keep the first
    occurrence (with a warning); malformed lines raise with their line
    number.
    """
    table = None
    duplicates = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            token, values = parts[0], parts[1:]
            if not values:
                raise ValueError(f"{path}:{lineno}: no vector values for token {token!r}")
            try:
                vec = np.array([float(v) for v in values], dtype=np.float64)
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: malformed float ({exc})") from None
            if table is None:
                table = EmbeddingTable(dim=len(values))
            elif len(values) != table.dim:
                raise ValueError(
                    f"{path}:{lineno}: vector length {len(values)} != expected {table.dim}"
                )
            if token in table:
                duplicates += 1
                continue
            table.add(token, vec)
    if table is None:
        raise ValueError(f"{path}: empty embedding file")
    if duplicates:
        log.warning("%s: %d duplicate tokens ignored (first occurrence kept)", path, duplicates)
    return table


def save_embeddings(path, table: EmbeddingTable) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for token, vec in table.vectors.items():
            fh.write(token + " " + " ".join(repr(float(v)) for v in vec) + "\n")


def embed_phrase(table: EmbeddingTable, tokens: list[str]) -> np.ndarray:
    """Arithmetic mean of the token vectors; OOV tokens contribute zeros
    but still count in the divisor."""
    if not tokens:
        raise ValueError("cannot embed an empty token list")
    total = np.zeros(table.dim, dtype=np.float64)
    for token in tokens:
        total += table.lookup(token)
    return total / len(tokens)


def random_table(tokens, dim: int, seed: int) -> EmbeddingTable:
    """Unit-norm random vectors for a synthetic vocabulary, one per token."""
    rng = np.random.default_rng(seed)
    table = EmbeddingTable(dim=dim)
    for token in tokens:
        vec = rng.normal(size=dim)
        table.add(token, vec / np.linalg.norm(vec))
    return table
