"""Training loop, optimizer, evaluation metrics, and checkpoint plumbing.

All randomness (shuffling, dropout) flows from the single seed in
``TrainConfig``, batches reduce in a fixed order, and the optimizer visits
parameters in sorted-name order, so two runs with the same seed produce
bit-identical losses.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import ParamStore, load_tensors, no_grad, save_tensors
from .data.datasets import AnswerVocab
from .model import ModelConfig, batch_loss, run_model, sample_loss
from .prepare import PreparedSample

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; message carries the offending epoch and batch."""


@dataclass
class TrainConfig:
    """Optimization settings. Defaults are the full-scale values; desk-scale
    runs override epochs, batch size, and learning rate."""

    epochs: int = 40
    batch_size: int = 128
    learning_rate: float = 1e-4
    warmup_epochs: int = 2
    decay_epoch: int = 20
    decay_factor: float = 0.5
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    precision: str = "test"  # "test" = 64-bit, "train" = 32-bit
    knowledge_guided: bool = True  # False ablates the memory read everywhere
    stop_at_val_top1: float | None = None  # early stop once val top-1 reaches this

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.learning_rate <= 0:
            raise ValueError(f"learning rate must be positive, got {self.learning_rate}")
        if self.warmup_epochs < 0 or self.decay_epoch < self.warmup_epochs:
            raise ValueError("need 0 <= warmup_epochs <= decay_epoch")

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "warmup_epochs": self.warmup_epochs,
            "decay_epoch": self.decay_epoch,
            "decay_factor": self.decay_factor,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "adam_eps": self.adam_eps,
            "seed": self.seed,
            "precision": self.precision,
            "knowledge_guided": self.knowledge_guided,
            "stop_at_val_top1": self.stop_at_val_top1,
        }


def lr_at(epoch: int, config: TrainConfig) -> float:
    """Piecewise schedule: linear warmup from base/10 to base, flat plateau,
    then exponential decay from the decay epoch on."""
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    base = config.learning_rate
    if epoch < config.warmup_epochs:
        start = base / 10.0
        return start + (base - start) * (epoch / config.warmup_epochs)
    if epoch < config.decay_epoch:
        return base
    return base * config.decay_factor ** (epoch - (config.decay_epoch - 1))


class Adam:
    """Adam with bias correction; visits parameters in sorted-name order."""

    def __init__(self, params: ParamStore, config: TrainConfig):
        self.params = params
        self.beta1 = config.beta1
        self.beta2 = config.beta2
        self.eps = config.adam_eps
        self.t = 0
        self.m = {name: np.zeros_like(t.data) for name, t in params.items()}
        self.v = {name: np.zeros_like(t.data) for name, t in params.items()}

    def step(self, lr: float) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1 ** self.t
        bias2 = 1.0 - b2 ** self.t
        for name in sorted(self.m):
            tensor = self.params[name]
            grad = tensor.grad
            if grad is None:
                continue
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * grad
            v *= b2
            v += (1.0 - b2) * grad * grad
            update = (m / bias1) / (np.sqrt(v / bias2) + self.eps)
            tensor.data = tensor.data - lr * update


@dataclass
class TypeStats:
    top1: float
    top3: float
    count: int


@dataclass
class EvalReport:
    top1: float
    top3: float
    count: int
    by_type: dict[str, TypeStats] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "top1": self.top1,
            "top3": self.top3,
            "count": self.count,
            "by_type": {k: {"top1": v.top1, "top3": v.top3, "count": v.count}
                        for k, v in self.by_type.items()},
        }

    def summary(self) -> str:
        parts = [f"top-1 {self.top1:.4f}  top-3 {self.top3:.4f}  n={self.count}"]
        for key in sorted(self.by_type):
            st = self.by_type[key]
            parts.append(f"  {key}: top-1 {st.top1:.4f}  top-3 {st.top3:.4f}  n={st.count}")
        return "\n".join(parts)


def report_from_logits(logit_rows, answer_indices, type_keys) -> EvalReport:
    """Accuracy aggregation from raw logits.

    Top-1 is the argmax; top-3 counts the gold answer among the three
    largest logits with ties broken by ascending answer index. An answer
    index of -1 (out of vocabulary) is always wrong.
    """
    if not len(logit_rows):
        raise ValueError("cannot evaluate an empty dataset")
    hits1: dict[str, int] = {}
    hits3: dict[str, int] = {}
    counts: dict[str, int] = {}
    total1 = total3 = 0
    for logits, gold, key in zip(logit_rows, answer_indices, type_keys):
        logits = np.asarray(logits)
        # lexsort: primary key -logits, ties resolved by ascending index
        order = np.lexsort((np.arange(logits.size), -logits))
        is1 = int(gold == order[0])
        is3 = int(gold in order[:3])
        hits1[key] = hits1.get(key, 0) + is1
        hits3[key] = hits3.get(key, 0) + is3
        counts[key] = counts.get(key, 0) + 1
        total1 += is1
        total3 += is3
    n = len(logit_rows)
    by_type = {
        key: TypeStats(top1=hits1[key] / counts[key], top3=hits3[key] / counts[key],
                       count=counts[key])
        for key in counts
    }
    return EvalReport(top1=total1 / n, top3=total3 / n, count=n, by_type=by_type)


def evaluate(
    params: ParamStore,
    config: ModelConfig,
    dataset: list[PreparedSample],
    ablate_knowledge: bool = False,
) -> EvalReport:
    """Top-1/top-3 accuracy with a per-question-type breakdown.

    Answers outside the vocabulary count as wrong. A sample whose answer
    index exceeds the model's class count signals a vocabulary mismatch.
    """
    if not dataset:
        raise ValueError("cannot evaluate an empty dataset")
    for ps in dataset:
        if ps.answer_index >= config.num_classes:
            raise ValueError(
                f"vocabulary mismatch: answer index {ps.answer_index} for "
                f"{ps.answer!r} but the model has {config.num_classes} classes"
            )
    rows = []
    with no_grad():
        for ps in dataset:
            out = run_model(
                params, config, ps.question_vecs, ps.memory.keys, ps.memory.values,
                ps.graph.node_feats, ps.graph.neighbours, ps.graph.edge_feats,
                rng=None, ablate_knowledge=ablate_knowledge)
            rows.append(out.logits.numpy().copy())
    return report_from_logits(
        rows,
        [ps.answer_index for ps in dataset],
        [f"{ps.steps}-step" for ps in dataset],
    )


@dataclass
class EpochLog:
    epoch: int
    lr: float
    train_loss: float
    val_top1: float | None
    val_top3: float | None
    seconds: float

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "lr": self.lr,
            "train_loss": self.train_loss,
            "val_top1": self.val_top1,
            "val_top3": self.val_top3,
            "seconds": round(self.seconds, 3),
        }


@dataclass
class TrainResult:
    history: list[EpochLog]
    best_epoch: int
    best_val_top1: float | None
    best_state: dict[str, np.ndarray]
    final_report: EvalReport | None
    seed: int

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "best_epoch": self.best_epoch,
            "best_val_top1": self.best_val_top1,
            "history": [e.to_dict() for e in self.history],
            "final_report": self.final_report.to_dict() if self.final_report else None,
        }


def train(
    params: ParamStore,
    model_config: ModelConfig,
    train_data: list[PreparedSample],
    val_data: list[PreparedSample] | None,
    config: TrainConfig,
) -> TrainResult:
    """Optimize ``params`` in place; returns the per-epoch log and the best
    parameter snapshot (highest validation top-1, or the final state when no
    validation split is given)."""
    if not train_data:
        raise ValueError("cannot train on an empty dataset")
    rng = np.random.default_rng(config.seed)
    optimizer = Adam(params, config)
    ablate = not config.knowledge_guided
    history: list[EpochLog] = []
    best_top1 = -1.0
    best_epoch = -1
    best_state = params.copy_values()
    log.info("training: %d samples, seed %d, %d epochs", len(train_data),
             config.seed, config.epochs)
    for epoch in range(config.epochs):
        start = time.perf_counter()
        lr = lr_at(epoch, config)
        order = rng.permutation(len(train_data))
        loss_sum = 0.0
        batch_count = 0
        for batch_no, lo in enumerate(range(0, len(order), config.batch_size)):
            batch = [train_data[i] for i in order[lo:lo + config.batch_size]]
            params.zero_grad()
            losses = []
            for ps in batch:
                out = run_model(
                    params, model_config, ps.question_vecs, ps.memory.keys,
                    ps.memory.values, ps.graph.node_feats, ps.graph.neighbours,
                    ps.graph.edge_feats, rng=rng, ablate_knowledge=ablate)
                losses.append(sample_loss(out, ps.answer_index))
            loss = batch_loss(losses)
            loss_value = loss.item()
            if not np.isfinite(loss_value):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, batch {batch_no}")
            loss.backward()
            optimizer.step(lr)
            loss_sum += loss_value
            batch_count += 1
        val_report = evaluate(params, model_config, val_data, ablate) if val_data else None
        entry = EpochLog(
            epoch=epoch,
            lr=lr,
            train_loss=loss_sum / batch_count,
            val_top1=val_report.top1 if val_report else None,
            val_top3=val_report.top3 if val_report else None,
            seconds=time.perf_counter() - start,
        )
        history.append(entry)
        log.info("epoch %d: lr %.2e  loss %.4f  val top-1 %s  (%.1fs)",
                 epoch, lr, entry.train_loss,
                 f"{entry.val_top1:.4f}" if entry.val_top1 is not None else "-",
                 entry.seconds)
        if val_report and val_report.top1 > best_top1:
            best_top1 = val_report.top1
            best_epoch = epoch
            best_state = params.copy_values()
        if (config.stop_at_val_top1 is not None and val_report
                and val_report.top1 >= config.stop_at_val_top1):
            log.info("early stop: val top-1 %.4f reached target", val_report.top1)
            break
    if not val_data:
        best_state = params.copy_values()
        best_epoch = history[-1].epoch
    final_report = evaluate(params, model_config, val_data, ablate) if val_data else None
    return TrainResult(
        history=history,
        best_epoch=best_epoch,
        best_val_top1=best_top1 if best_top1 >= 0 else None,
        best_state=best_state,
        final_report=final_report,
        seed=config.seed,
    )


# Checkpoints --------------------------------------------------------------

MODEL_META_FILE = "model.json"


def save_checkpoint(directory, params: ParamStore, config: ModelConfig,
                    vocab: AnswerVocab, meta: dict | None = None) -> None:
    """Write parameters plus the model config and answer vocabulary."""
    directory = Path(directory)
    save_tensors(directory, params.state_dict())
    payload = {
        "model": config.to_dict(),
        "answers": vocab.to_list(),
        "meta": meta or {},
    }
    (directory / MODEL_META_FILE).write_text(json.dumps(payload, indent=2))


def load_checkpoint(directory) -> tuple[ParamStore, ModelConfig, AnswerVocab, dict]:
    directory = Path(directory)
    meta_path = directory / MODEL_META_FILE
    if not meta_path.exists():
        raise FileNotFoundError(f"{meta_path} missing; not a model checkpoint")
    payload = json.loads(meta_path.read_text())
    config = ModelConfig.from_dict(payload["model"])
    vocab = AnswerVocab.from_list(payload["answers"])
    tensors = load_tensors(directory)
    params = ParamStore()
    for name in sorted(tensors):
        params.add(name, tensors[name])
    return params, config, vocab, payload.get("meta", {})
