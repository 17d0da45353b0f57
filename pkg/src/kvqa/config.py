"""Flat key/value run configuration.

A run is configured by a plain text file of ``key = value`` lines; every key
can also be given as a command-line flag of the same name, which wins over
the file. The single schema below drives file parsing, flag registration,
and type coercion, so the three never drift apart.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .model import ModelConfig
from .training import TrainConfig

_TRUE = {"true", "1", "yes", "on"}
_FALSE = {"false", "0", "no", "off"}


@dataclass(frozen=True)
class ConfigField:
    name: str
    kind: str  # int | float | bool | str | optfloat
    default: object
    help: str


# Data paths, model shape, and optimization — mirrors TrainConfig plus the
# model and data-preparation settings a run needs.
RUN_FIELDS: tuple[ConfigField, ...] = (
    ConfigField("train_samples", "str", "", "path to the training sample JSONL"),
    ConfigField("val_samples", "str", "", "path to the validation sample JSONL"),
    ConfigField("kb", "str", "", "path to the knowledge-base file (JSONL or TSV)"),
    ConfigField("embeddings", "str", "", "path to the word-embedding text file"),
    ConfigField("out_dir", "str", "run", "directory for checkpoints and logs"),
    ConfigField("top_k", "int", 5, "facts retrieved per question"),
    ConfigField("num_neighbours", "int", 5, "spatial graph neighbours per object"),
    ConfigField("hidden", "int", 512, "LSTM hidden size per direction"),
    ConfigField("attn_width", "int", 0, "question-attention width (0 = auto)"),
    ConfigField("mem_dim", "int", 300, "memory key/value width"),
    ConfigField("graph_dim", "int", 1024, "graph node width"),
    ConfigField("graph_attn_width", "int", 0, "graph-attention width (0 = auto)"),
    ConfigField("heads", "int", 4, "graph attention heads"),
    ConfigField("steps", "int", 2, "reasoning steps T"),
    ConfigField("dropout", "float", 0.1, "dropout rate"),
    ConfigField("memory_variant", "str", "proposed",
                "memory type: proposed | average | kv"),
    ConfigField("edge_softmax", "str", "global",
                "edge-attention normalization: global | per_node"),
    ConfigField("epochs", "int", 40, "training epochs"),
    ConfigField("batch_size", "int", 128, "samples per optimizer step"),
    ConfigField("learning_rate", "float", 1e-4, "base learning rate"),
    ConfigField("warmup_epochs", "int", 2, "linear warmup epochs"),
    ConfigField("decay_epoch", "int", 20, "epoch at which decay starts"),
    ConfigField("decay_factor", "float", 0.5, "per-epoch decay multiplier"),
    ConfigField("seed", "int", 0, "seed for init, shuffling, and dropout"),
    ConfigField("precision", "str", "test", "float width: test (64) | train (32)"),
    ConfigField("knowledge_guided", "bool", True,
                "read the knowledge memory (false ablates it)"),
    ConfigField("stop_at_val_top1", "optfloat", None,
                "stop early at this validation top-1 (empty = never)"),
)


def coerce_value(field: ConfigField, text: str):
    text = text.strip()
    try:
        if field.kind == "int":
            return int(text)
        if field.kind == "float":
            return float(text)
        if field.kind == "optfloat":
            return None if text.lower() in ("", "none") else float(text)
        if field.kind == "bool":
            low = text.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(f"not a boolean: {text!r}")
        return text
    except ValueError as exc:
        raise ValueError(f"config key {field.name!r}: {exc}") from None


def parse_config_file(path) -> dict[str, str]:
    """Read ``key = value`` lines; ``#`` starts a comment. Values stay raw
    strings until coerced against the schema."""
    values: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, _, value = stripped.partition("=")
        key = key.strip()
        if key in values:
            raise ValueError(f"{path}:{lineno}: duplicate key {key!r}")
        values[key] = value.strip()
    return values


def resolve_run_config(file_path=None, overrides: dict | None = None) -> dict:
    """Defaults <- config file <- explicit overrides, all schema-checked."""
    by_name = {f.name: f for f in RUN_FIELDS}
    resolved = {f.name: f.default for f in RUN_FIELDS}
    if file_path is not None:
        for key, raw in parse_config_file(file_path).items():
            if key not in by_name:
                raise ValueError(f"unknown config key {key!r} in {file_path}")
            resolved[key] = coerce_value(by_name[key], raw)
    for key, value in (overrides or {}).items():
        if key not in by_name:
            raise ValueError(f"unknown config key {key!r}")
        if value is None:
            continue
        if isinstance(value, str):
            value = coerce_value(by_name[key], value)
        resolved[key] = value
    return resolved


def model_config_from_run(run: dict, num_classes: int, embed_dim: int) -> ModelConfig:
    """Model shape from a resolved run config; widths tied to the embedding
    table are filled in from the data, not the file."""
    return ModelConfig(
        num_classes=num_classes,
        embed_dim=embed_dim,
        node_input_dim=embed_dim,
        hidden=run["hidden"],
        attn_width=run["attn_width"],
        mem_dim=run["mem_dim"],
        graph_dim=run["graph_dim"],
        graph_attn_width=run["graph_attn_width"],
        heads=run["heads"],
        steps=run["steps"],
        dropout=run["dropout"],
        memory_variant=run["memory_variant"],
        edge_softmax=run["edge_softmax"],
    )


def train_config_from_run(run: dict) -> TrainConfig:
    return TrainConfig(
        epochs=run["epochs"],
        batch_size=run["batch_size"],
        learning_rate=run["learning_rate"],
        warmup_epochs=run["warmup_epochs"],
        decay_epoch=run["decay_epoch"],
        decay_factor=run["decay_factor"],
        seed=run["seed"],
        precision=run["precision"],
        knowledge_guided=run["knowledge_guided"],
        stop_at_val_top1=run["stop_at_val_top1"],
    )
