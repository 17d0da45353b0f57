"""Command-line interface.

Subcommands: ``gen-data`` (synthetic world -> dataset files), ``retrieve``
(question + KB -> top-k facts), ``build-graph`` (detections -> graph dump),
``train`` (config -> checkpoint + log), ``eval`` (checkpoint + split ->
metrics), ``attn-dump`` (checkpoint + samples -> attention records), and
``ablate`` (suite -> comparison table).

Run settings come from a ``key = value`` config file; every key is also a
flag of the same name, and flags win. The active seed is always logged.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .ablation import SUITES, AblationSetup, run_ablation
from .autodiff import no_grad, use_precision
from .config import (RUN_FIELDS, model_config_from_run, resolve_run_config,
                     train_config_from_run)
from .data import (AnswerVocab, Detection, SyntheticWorld,
                   generate_synthetic_dataset, load_embeddings, load_kb,
                   load_samples, save_embeddings, save_kb, save_samples,
                   world_for_memory_variants, world_for_one_step_learning,
                   world_for_two_step_gap)
from .graph import build_graph
from .model import init_params, run_model
from .prepare import prepare_dataset
from .retrieval import build_query, retrieve_top_k
from .training import evaluate, load_checkpoint, save_checkpoint, train

log = logging.getLogger("kvqa")

PRESETS = {
    "mixed": SyntheticWorld,
    "one-step": world_for_one_step_learning,
    "two-step": world_for_two_step_gap,
    "memory-variants": world_for_memory_variants,
}


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default=None, help="key = value config file")
    for field in RUN_FIELDS:
        parser.add_argument(f"--{field.name}", default=None, metavar="V",
                            help=f"{field.help} (default {field.default!r})")


def _resolved_run(args) -> dict:
    overrides = {f.name: getattr(args, f.name) for f in RUN_FIELDS}
    run = resolve_run_config(args.config, overrides)
    log.info("run config: %s", json.dumps(run, sort_keys=True))
    log.info("seed: %d", run["seed"])
    return run


def _load_run_data(run: dict):
    for key in ("train_samples", "kb", "embeddings"):
        if not run[key]:
            raise SystemExit(f"config key {key!r} is required")
    table = load_embeddings(run["embeddings"])
    facts = load_kb(run["kb"], table)
    train_samples = load_samples(run["train_samples"])
    val_samples = load_samples(run["val_samples"]) if run["val_samples"] else []
    return table, facts, train_samples, val_samples


def _cmd_gen_data(args) -> int:
    maker = PRESETS[args.preset]
    world = maker(seed=args.seed) if args.preset != "mixed" else SyntheticWorld(seed=args.seed)
    data = generate_synthetic_dataset(world, args.n)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for split in ("train", "val", "test"):
        save_samples(out / f"{split}.jsonl", data.split(split))
    save_kb(out / "kb.jsonl", data.facts)
    save_embeddings(out / "embeddings.txt", data.table)
    world_info = {
        "preset": args.preset,
        "seed": world.seed,
        "n": args.n,
        "entities": world.entities,
        "relations": world.relations,
        "fillers": world.fillers,
        "composites": {k: list(v) for k, v in world.composites.items()},
        "chain_style": world.chain_style,
        "confusable_chains": world.confusable_chains,
        "two_step_fraction": world.two_step_fraction,
        "embed_dim": world.embed_dim,
        "splits": {s: len(data.split(s)) for s in ("train", "val", "test")},
        "answers": data.vocab.to_list(),
    }
    (out / "world.json").write_text(json.dumps(world_info, indent=2))
    log.info("seed: %d", world.seed)
    print(f"wrote {args.n} samples ({world_info['splits']}) to {out}")
    return 0


def _cmd_retrieve(args) -> int:
    table = load_embeddings(args.embeddings)
    facts = load_kb(args.kb, table)
    if args.kb_id:
        facts = [f for f in facts if f.kb_id == args.kb_id]
    labelled = [Detection(label=lab, box=(0.0, 0.0, 1.0, 1.0))
                for lab in dict.fromkeys(args.label or [])]
    query = build_query(args.question, labelled, facts, table, k=args.k)
    hits = retrieve_top_k(facts, query, table)
    for idx, score in hits:
        print(f"{score:.4f}\t{facts[idx].as_text()}")
    if not hits:
        print("no facts retrieved", file=sys.stderr)
    return 0


def _cmd_build_graph(args) -> int:
    table = load_embeddings(args.embeddings)
    samples = load_samples(args.samples)
    if not 0 <= args.index < len(samples):
        raise SystemExit(f"sample index {args.index} out of range (n={len(samples)})")
    sample = samples[args.index]
    graph = build_graph(sample.detections, table, num_neighbours=args.num_neighbours)
    dump = {
        "question": sample.question,
        "labels": graph.labels,
        "boxes": [list(map(float, b)) for b in graph.boxes],
        "neighbours": [list(map(int, row)) for row in graph.neighbours],
        "edge_feats": [[list(map(float, e)) for e in row] for row in graph.edge_feats],
    }
    text = json.dumps(dump, indent=2)
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote graph to {args.out}")
    else:
        print(text)
    return 0


def _cmd_train(args) -> int:
    run = _resolved_run(args)
    use_precision(run["precision"])
    table, facts, train_samples, val_samples = _load_run_data(run)
    vocab = AnswerVocab.from_samples(train_samples)
    model_config = model_config_from_run(run, num_classes=len(vocab), embed_dim=table.dim)
    train_config = train_config_from_run(run)
    prep = dict(top_k=run["top_k"], num_neighbours=run["num_neighbours"],
                memory_variant=run["memory_variant"])
    train_prep = prepare_dataset(train_samples, facts, table, vocab, **prep)
    val_prep = (prepare_dataset(val_samples, facts, table, vocab, **prep)
                if val_samples else None)
    params = init_params(model_config, seed=run["seed"])
    result = train(params, model_config, train_prep, val_prep, train_config)
    params.load_state_dict(result.best_state)
    out_dir = Path(run["out_dir"])
    save_checkpoint(out_dir / "checkpoint", params, model_config, vocab, meta={
        "seed": run["seed"],
        "best_epoch": result.best_epoch,
        "best_val_top1": result.best_val_top1,
        "precision": run["precision"],
        "knowledge_guided": run["knowledge_guided"],
        "top_k": run["top_k"],
        "num_neighbours": run["num_neighbours"],
    })
    (out_dir / "train_log.json").write_text(json.dumps(result.to_dict(), indent=2))
    best = f"{result.best_val_top1:.4f}" if result.best_val_top1 is not None else "n/a"
    print(f"checkpoint: {out_dir / 'checkpoint'}  best val top-1: {best}")
    return 0


def _load_checkpoint_data(args):
    use_precision(args.precision)
    params, model_config, vocab, meta = load_checkpoint(args.checkpoint)
    if model_config.num_classes != len(vocab):
        raise SystemExit(
            f"vocabulary mismatch: checkpoint has {model_config.num_classes} "
            f"classes but {len(vocab)} stored answers")
    table = load_embeddings(args.embeddings)
    facts = load_kb(args.kb, table)
    samples = load_samples(args.samples)
    prepared = prepare_dataset(
        samples, facts, table, vocab,
        top_k=meta.get("top_k", 5), num_neighbours=meta.get("num_neighbours", 5),
        memory_variant=model_config.memory_variant)
    return params, model_config, vocab, meta, samples, prepared


def _cmd_eval(args) -> int:
    params, model_config, vocab, meta, _, prepared = _load_checkpoint_data(args)
    log.info("seed: %s", meta.get("seed", "unknown"))
    report = evaluate(params, model_config, prepared,
                      ablate_knowledge=not meta.get("knowledge_guided", True))
    print(report.summary())
    if args.out:
        Path(args.out).write_text(json.dumps(report.to_dict(), indent=2))
    return 0


def _attention_records(sample, prepared_sample, output, vocab):
    records = []
    for t, trace in enumerate(output.steps):
        rec = {
            "step": t,
            "question_attn": trace.question_attn.numpy().tolist(),
            "fact_relevance": None,
            "element_weights": None,
            "node_attn": trace.node_attn.numpy().tolist(),
            "edge_attn": (trace.edge_attn.numpy().tolist()
                          if trace.edge_attn is not None else None),
        }
        if trace.memory is not None:
            rec["fact_relevance"] = trace.memory.slot_attn.numpy().tolist()
            if trace.memory.value_attn is not None:
                rec["element_weights"] = trace.memory.value_attn.numpy().tolist()
        records.append(rec)
    return {
        "question": sample.question,
        "question_tokens": prepared_sample.question_tokens,
        "facts": prepared_sample.memory.fact_texts,
        "node_labels": prepared_sample.graph.labels,
        "prediction": vocab.answer(output.predicted()),
        "gold": sample.answer,
        "steps": records,
    }


def _cmd_attn_dump(args) -> int:
    params, model_config, vocab, meta, samples, prepared = _load_checkpoint_data(args)
    log.info("seed: %s", meta.get("seed", "unknown"))
    limit = args.limit if args.limit else len(prepared)
    sink = open(args.out, "w") if args.out else sys.stdout
    try:
        with no_grad():
            for sample, ps in list(zip(samples, prepared))[:limit]:
                output = run_model(
                    params, model_config, ps.question_vecs, ps.memory.keys,
                    ps.memory.values, ps.graph.node_feats, ps.graph.neighbours,
                    ps.graph.edge_feats,
                    ablate_knowledge=not meta.get("knowledge_guided", True))
                sink.write(json.dumps(_attention_records(sample, ps, output, vocab)) + "\n")
    finally:
        if args.out:
            sink.close()
    if args.out:
        print(f"wrote {limit} attention records to {args.out}")
    return 0


def _cmd_ablate(args) -> int:
    run = _resolved_run(args)
    use_precision(run["precision"])
    table, facts, train_samples, val_samples = _load_run_data(run)
    if not val_samples:
        raise SystemExit("ablation suites need a validation split (val_samples)")
    vocab = AnswerVocab.from_samples(train_samples)
    model_config = model_config_from_run(run, num_classes=len(vocab), embed_dim=table.dim)
    setup = AblationSetup(
        train_samples=train_samples, val_samples=val_samples, facts=facts,
        table=table, vocab=vocab, model=model_config,
        train=train_config_from_run(run),
        seeds=tuple(int(s) for s in args.seeds.split(",")),
        top_k=run["top_k"], num_neighbours=run["num_neighbours"])
    result = run_ablation(args.suite, setup)
    print(result.format())
    if args.out:
        Path(args.out).write_text(json.dumps(result.to_dict(), indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kvqa",
        description="Knowledge-based VQA: dynamic key-value memory + spatial graph reasoning.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset")
    p.add_argument("--preset", choices=sorted(PRESETS), default="mixed")
    p.add_argument("--n", type=int, default=1000, help="number of samples")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("retrieve", help="top-k facts for a question")
    p.add_argument("--question", required=True)
    p.add_argument("--kb", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--kb-id", default="", help="restrict to one KB id")
    p.add_argument("--label", action="append", help="visible object label (repeatable)")
    p.set_defaults(func=_cmd_retrieve)

    p = sub.add_parser("build-graph", help="spatial graph for one sample")
    p.add_argument("--samples", required=True)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--num_neighbours", type=int, default=5)
    p.add_argument("--out", default="")
    p.set_defaults(func=_cmd_build_graph)

    p = sub.add_parser("train", help="train a model from a run config")
    _add_run_flags(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a sample file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--samples", required=True)
    p.add_argument("--kb", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--precision", default="test")
    p.add_argument("--out", default="")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("attn-dump", help="export per-step attention records")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--samples", required=True)
    p.add_argument("--kb", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--precision", default="test")
    p.add_argument("--limit", type=int, default=0, help="0 = all samples")
    p.add_argument("--out", default="")
    p.set_defaults(func=_cmd_attn_dump)

    p = sub.add_parser("ablate", help="run an ablation suite")
    p.add_argument("--suite", choices=SUITES, required=True)
    p.add_argument("--seeds", default="0,1,2", help="comma-separated training seeds")
    p.add_argument("--out", default="")
    _add_run_flags(p)
    p.set_defaults(func=_cmd_ablate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
