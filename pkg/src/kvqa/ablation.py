"""Ablation suites: reasoning depth, memory variant, knowledge guidance.

Each suite trains one model per (setting, seed) pair on the same data and
reports mean validation top-1 per setting with the per-seed values kept
alongside. Results at this scale are synthetic-task numbers; see
``FULL_SCALE_REFERENCE`` for how the corresponding sweeps land on the public
benchmarks at full scale (not reproducible here and recorded only for
orientation).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

from .data.datasets import AnswerVocab, Sample
from .data.embeddings import EmbeddingTable
from .data.kb import Fact
from .memory import VARIANTS
from .model import ModelConfig, init_params
from .prepare import prepare_dataset
from .training import TrainConfig, evaluate, train

log = logging.getLogger(__name__)

SUITES = ("steps", "memory", "knowledge-guidance")

# Full-scale numbers for the same sweeps on public benchmarks (KRVQR and
# FVQA top-1/top-3); desk-scale synthetic accuracies are not comparable.
FULL_SCALE_REFERENCE = {
    "krvqr_top1": 31.4,
    "fvqa_top1": 78.6,
    "fvqa_top3": 90.6,
    "steps_krvqr_top1": {2: 31.4, 3: 27.1},
}


@dataclass
class AblationSetup:
    """Everything a suite needs: raw data (re-prepared per memory variant)
    plus the base model/training configuration."""

    train_samples: list[Sample]
    val_samples: list[Sample]
    facts: list[Fact]
    table: EmbeddingTable
    vocab: AnswerVocab
    model: ModelConfig
    train: TrainConfig
    seeds: tuple[int, ...] = (0, 1, 2)
    top_k: int = 5
    num_neighbours: int = 5


@dataclass
class AblationRow:
    setting: str
    per_seed: dict[int, float]
    mean_top1: float


@dataclass
class AblationTable:
    suite: str
    rows: list[AblationRow] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "suite": self.suite,
            "rows": [
                {"setting": r.setting, "per_seed": r.per_seed, "mean_top1": r.mean_top1}
                for r in self.rows
            ],
        }

    def format(self) -> str:
        lines = [f"suite: {self.suite}"]
        width = max(len(r.setting) for r in self.rows)
        for r in self.rows:
            seeds = "  ".join(f"s{seed}={v:.4f}" for seed, v in sorted(r.per_seed.items()))
            lines.append(f"  {r.setting:<{width}}  mean top-1 {r.mean_top1:.4f}  ({seeds})")
        return "\n".join(lines)


def _prepare(setup: AblationSetup, variant: str):
    train_prep = prepare_dataset(
        setup.train_samples, setup.facts, setup.table, setup.vocab,
        top_k=setup.top_k, num_neighbours=setup.num_neighbours,
        memory_variant=variant)
    val_prep = prepare_dataset(
        setup.val_samples, setup.facts, setup.table, setup.vocab,
        top_k=setup.top_k, num_neighbours=setup.num_neighbours,
        memory_variant=variant)
    return train_prep, val_prep


def _run_cell(setup: AblationSetup, model_config: ModelConfig,
              train_config: TrainConfig, prepared) -> dict[int, float]:
    train_prep, val_prep = prepared
    per_seed: dict[int, float] = {}
    for seed in setup.seeds:
        cfg = replace(train_config, seed=seed)
        params = init_params(model_config, seed=seed)
        result = train(params, model_config, train_prep, val_prep, cfg)
        params.load_state_dict(result.best_state)
        report = evaluate(params, model_config, val_prep,
                          ablate_knowledge=not cfg.knowledge_guided)
        per_seed[seed] = report.top1
        log.info("suite cell seed %d -> top-1 %.4f", seed, report.top1)
    return per_seed


def run_ablation(suite: str, setup: AblationSetup) -> AblationTable:
    """Run one suite; each row is the mean over ``setup.seeds``."""
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}; expected one of {SUITES}")
    table = AblationTable(suite=suite)
    if suite == "steps":
        prepared = _prepare(setup, setup.model.memory_variant)
        for steps in (1, 2, 3, 4):
            model_config = replace(setup.model, steps=steps)
            per_seed = _run_cell(setup, model_config, setup.train, prepared)
            table.rows.append(_row(f"T={steps}", per_seed))
    elif suite == "memory":
        for variant in VARIANTS:
            model_config = replace(setup.model, memory_variant=variant)
            prepared = _prepare(setup, variant)
            per_seed = _run_cell(setup, model_config, setup.train, prepared)
            table.rows.append(_row(variant, per_seed))
    else:  # knowledge-guidance
        prepared = _prepare(setup, setup.model.memory_variant)
        for guided in (True, False):
            train_config = replace(setup.train, knowledge_guided=guided)
            per_seed = _run_cell(setup, setup.model, train_config, prepared)
            table.rows.append(_row("guided" if guided else "unguided", per_seed))
    log.info("%s", table.format())
    return table


def _row(setting: str, per_seed: dict[int, float]) -> AblationRow:
    return AblationRow(setting=setting, per_seed=per_seed,
                       mean_top1=sum(per_seed.values()) / len(per_seed))
