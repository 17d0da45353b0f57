"""Estimator facade: fit/transform/predict wrappers over the pipeline.

Follows the scikit-learn conventions (constructor keyword hyperparameters,
``get_params``/``set_params``, learned attributes with trailing underscores)
without depending on scikit-learn itself.
"""

from __future__ import annotations

import numpy as np

from .data.datasets import AnswerVocab, Sample
from .data.embeddings import EmbeddingTable
from .data.kb import Fact
from .model import ModelConfig, init_params, run_model
from .autodiff import no_grad
from .prepare import PreparedSample, prepare_dataset
from .training import TrainConfig, evaluate, train


class _ParamsMixin:
    _param_names: tuple[str, ...] = ()

    def get_params(self, deep: bool = True) -> dict:
        return {name: getattr(self, name) for name in self._param_names}

    def set_params(self, **params):
        for name, value in params.items():
            if name not in self._param_names:
                raise ValueError(f"unknown parameter {name!r} for {type(self).__name__}")
            setattr(self, name, value)
        return self


class SamplePreparer(_ParamsMixin):
    """Turns raw samples into model-ready bundles (embeddings, retrieved
    memory, spatial graph). ``fit`` freezes the answer vocabulary from the
    training answers; ``transform`` maps any split against it."""

    _param_names = ("top_k", "num_neighbours", "memory_variant")

    def __init__(self, top_k: int = 5, num_neighbours: int = 5,
                 memory_variant: str = "proposed"):
        self.top_k = top_k
        self.num_neighbours = num_neighbours
        self.memory_variant = memory_variant

    def fit(self, X: list[Sample], y=None, *, facts: list[Fact],
            table: EmbeddingTable, vocab: AnswerVocab | None = None):
        self.facts_ = facts
        self.table_ = table
        self.vocab_ = vocab if vocab is not None else AnswerVocab.from_samples(X)
        return self

    def transform(self, X: list[Sample]) -> list[PreparedSample]:
        if not hasattr(self, "vocab_"):
            raise RuntimeError("SamplePreparer is not fitted yet")
        return prepare_dataset(
            X, self.facts_, self.table_, self.vocab_,
            top_k=self.top_k, num_neighbours=self.num_neighbours,
            memory_variant=self.memory_variant)

    def fit_transform(self, X: list[Sample], y=None, **fit_kwargs) -> list[PreparedSample]:
        return self.fit(X, y, **fit_kwargs).transform(X)


class AnswerClassifier(_ParamsMixin):
    """Trainable question-answering model behind a classifier interface.

    ``fit`` expects prepared samples (see ``SamplePreparer``); the gold
    answers ride inside them, so ``y`` is optional and only checked for
    consistency when given.
    """

    _param_names = (
        "hidden", "attn_width", "mem_dim", "graph_dim", "graph_attn_width",
        "heads", "steps", "dropout", "memory_variant", "edge_softmax",
        "epochs", "batch_size", "learning_rate", "warmup_epochs",
        "decay_epoch", "decay_factor", "knowledge_guided", "seed",
    )

    def __init__(self, hidden: int = 16, attn_width: int = 0, mem_dim: int = 32,
                 graph_dim: int = 32, graph_attn_width: int = 16, heads: int = 4,
                 steps: int = 2, dropout: float = 0.0,
                 memory_variant: str = "proposed", edge_softmax: str = "global",
                 epochs: int = 20, batch_size: int = 32,
                 learning_rate: float = 1e-3, warmup_epochs: int = 2,
                 decay_epoch: int = 20, decay_factor: float = 0.5,
                 knowledge_guided: bool = True, seed: int = 0):
        self.hidden = hidden
        self.attn_width = attn_width
        self.mem_dim = mem_dim
        self.graph_dim = graph_dim
        self.graph_attn_width = graph_attn_width
        self.heads = heads
        self.steps = steps
        self.dropout = dropout
        self.memory_variant = memory_variant
        self.edge_softmax = edge_softmax
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.warmup_epochs = warmup_epochs
        self.decay_epoch = decay_epoch
        self.decay_factor = decay_factor
        self.knowledge_guided = knowledge_guided
        self.seed = seed

    def _configs(self, X: list[PreparedSample], classes: list[str]):
        embed_dim = int(X[0].question_vecs.shape[1])
        model = ModelConfig(
            num_classes=len(classes), embed_dim=embed_dim,
            node_input_dim=embed_dim, hidden=self.hidden,
            attn_width=self.attn_width, mem_dim=self.mem_dim,
            graph_dim=self.graph_dim, graph_attn_width=self.graph_attn_width,
            heads=self.heads, steps=self.steps, dropout=self.dropout,
            memory_variant=self.memory_variant, edge_softmax=self.edge_softmax)
        trainer = TrainConfig(
            epochs=self.epochs, batch_size=self.batch_size,
            learning_rate=self.learning_rate, warmup_epochs=self.warmup_epochs,
            decay_epoch=self.decay_epoch, decay_factor=self.decay_factor,
            seed=self.seed, knowledge_guided=self.knowledge_guided)
        return model, trainer

    def fit(self, X: list[PreparedSample], y: list[str] | None = None, *,
            classes: list[str], val: list[PreparedSample] | None = None):
        if not X:
            raise ValueError("cannot fit on an empty dataset")
        if y is not None:
            mismatches = [i for i, (ps, ans) in enumerate(zip(X, y)) if ps.answer != ans]
            if mismatches:
                raise ValueError(f"y disagrees with prepared answers at {mismatches[:5]}")
        self.classes_ = list(classes)
        self.model_config_, train_config = self._configs(X, self.classes_)
        self.params_ = init_params(self.model_config_, seed=self.seed)
        result = train(self.params_, self.model_config_, X, val, train_config)
        self.params_.load_state_dict(result.best_state)
        self.history_ = result.history
        return self

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise RuntimeError("AnswerClassifier is not fitted yet")

    def decision_function(self, X: list[PreparedSample]) -> np.ndarray:
        self._check_fitted()
        rows = []
        with no_grad():
            for ps in X:
                out = run_model(
                    self.params_, self.model_config_, ps.question_vecs,
                    ps.memory.keys, ps.memory.values, ps.graph.node_feats,
                    ps.graph.neighbours, ps.graph.edge_feats,
                    ablate_knowledge=not self.knowledge_guided)
                rows.append(out.logits.numpy().copy())
        return np.stack(rows)

    def predict(self, X: list[PreparedSample]) -> list[str]:
        logits = self.decision_function(X)
        return [self.classes_[int(i)] for i in np.argmax(logits, axis=1)]

    def predict_proba(self, X: list[PreparedSample]) -> np.ndarray:
        logits = self.decision_function(X)
        shifted = logits - logits.max(axis=1, keepdims=True)
        expd = np.exp(shifted)
        return expd / expd.sum(axis=1, keepdims=True)

    def score(self, X: list[PreparedSample], y: list[str] | None = None) -> float:
        """Top-1 accuracy against ``y`` (or the prepared gold answers)."""
        self._check_fitted()
        if y is None:
            report = evaluate(self.params_, self.model_config_, X,
                              ablate_knowledge=not self.knowledge_guided)
            return report.top1
        preds = self.predict(X)
        return sum(p == g for p, g in zip(preds, y)) / len(X)
