"""Run-configuration schema: parsing, coercion, precedence."""

import pytest

from kvqa.config import (
    RUN_FIELDS,
    coerce_value,
    model_config_from_run,
    parse_config_file,
    resolve_run_config,
    train_config_from_run,
)


def field(name):
    return next(f for f in RUN_FIELDS if f.name == name)


def test_coercion_per_kind():
    assert coerce_value(field("epochs"), " 12 ") == 12
    assert coerce_value(field("learning_rate"), "3e-3") == pytest.approx(3e-3)
    assert coerce_value(field("memory_variant"), "kv") == "kv"
    for text in ("true", "1", "Yes", "on"):
        assert coerce_value(field("knowledge_guided"), text) is True
    for text in ("false", "0", "No", "off"):
        assert coerce_value(field("knowledge_guided"), text) is False
    assert coerce_value(field("stop_at_val_top1"), "none") is None
    assert coerce_value(field("stop_at_val_top1"), "") is None
    assert coerce_value(field("stop_at_val_top1"), "0.95") == pytest.approx(0.95)


def test_coercion_errors_name_the_key():
    with pytest.raises(ValueError, match="epochs"):
        coerce_value(field("epochs"), "twelve")
    with pytest.raises(ValueError, match="knowledge_guided.*boolean"):
        coerce_value(field("knowledge_guided"), "maybe")


def test_parse_config_file_lines_and_comments(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(
        "# an experiment\n"
        "epochs = 5\n"
        "\n"
        "learning_rate = 1e-3  # inline comment\n"
        "memory_variant=kv\n"
    )
    values = parse_config_file(path)
    assert values == {"epochs": "5", "learning_rate": "1e-3",
                      "memory_variant": "kv"}


def test_parse_config_file_rejects_bad_lines(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("epochs = 5\njust some words\n")
    with pytest.raises(ValueError, match=":2:"):
        parse_config_file(path)


def test_parse_config_file_rejects_duplicates(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("epochs = 5\nepochs = 6\n")
    with pytest.raises(ValueError, match="duplicate key 'epochs'"):
        parse_config_file(path)


def test_resolution_precedence_defaults_file_overrides(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("epochs = 5\nhidden = 64\n")
    run = resolve_run_config(path, {"epochs": 9, "seed": "3"})
    assert run["epochs"] == 9          # override beats file
    assert run["hidden"] == 64         # file beats default
    assert run["batch_size"] == 128    # untouched default
    assert run["seed"] == 3            # string overrides are coerced


def test_resolution_ignores_none_overrides(tmp_path):
    run = resolve_run_config(None, {"epochs": None})
    assert run["epochs"] == 40


def test_unknown_keys_rejected(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("labmda = 3\n")
    with pytest.raises(ValueError, match="unknown config key 'labmda'"):
        resolve_run_config(path)
    with pytest.raises(ValueError, match="unknown config key"):
        resolve_run_config(None, {"bogus": 1})


def test_configs_built_from_resolved_run():
    run = resolve_run_config(None, {
        "hidden": 8, "mem_dim": 16, "graph_dim": 16, "graph_attn_width": 8,
        "heads": 2, "steps": 3, "dropout": 0.0, "epochs": 4,
        "batch_size": 16, "learning_rate": 1e-3, "stop_at_val_top1": "0.9",
    })
    mc = model_config_from_run(run, num_classes=7, embed_dim=12)
    assert mc.num_classes == 7
    assert mc.embed_dim == mc.node_input_dim == 12
    assert mc.steps == 3
    assert mc.attn_width == 16  # auto: 2 * hidden
    tc = train_config_from_run(run)
    assert tc.epochs == 4
    assert tc.stop_at_val_top1 == pytest.approx(0.9)
    assert tc.knowledge_guided is True


def test_schema_defaults_are_self_consistent():
    run = resolve_run_config(None, {"hidden": 4, "graph_dim": 8,
                                    "graph_attn_width": 4, "mem_dim": 8,
                                    "heads": 2})
    mc = model_config_from_run(run, num_classes=3, embed_dim=5)
    tc = train_config_from_run(run)
    assert mc.memory_variant == "proposed"
    assert tc.learning_rate == pytest.approx(1e-4)
