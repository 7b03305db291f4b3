"""Command line interface.

Subcommands mirror the pipeline stages: preprocess, extract-events,
build-graph, train, generate, evaluate, plot.

Configuration layering, lowest to highest precedence: dataclass defaults,
then a JSON config file (--config), then EVSTORY_* environment variables,
then explicit command line flags.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch

from . import __version__
from .corpus import (
    PreprocessOptions,
    load_name_lexicon,
    preprocess_corpus,
    read_records,
    validate_splits,
)
from .events import (
    EventSequence,
    RuleBasedDependencyParser,
    build_event_graph,
    extract_sequence,
    read_event_sequences,
    write_event_graph,
    write_event_sequences,
)
from .inference import GenerationConfig, build_prompt, generate
from .metrics import (
    MetricConfig,
    MetricReport,
    WordEmbeddingTable,
    evaluate_generated,
    perplexity,
)
from .model import ConfigError, ContextEventModel, ModelConfig, load_checkpoint
from .plots import render_report
from .providers import make_sentence_embedder
from .training import (
    TrainConfig,
    build_example,
    build_training_vocab,
    read_similarity_cache,
    similarity_targets,
    train,
    warm_start,
)
from .vocab import Vocab

logger = logging.getLogger("evstory")

ENV_PREFIX = "EVSTORY_"


# ---- config layering -------------------------------------------------


def _coerce(raw: str, annotation) -> object:
    text = str(annotation)
    if annotation is bool or "bool" in text:
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if annotation is int or "int" in text:
        return int(raw)
    if annotation is float or "float" in text:
        return float(raw)
    return raw


def layer_config(cls, file_section: Optional[dict], flags: dict):
    """defaults < config file < environment < flags (None flags are unset)."""
    merged: dict = {}
    fields = {f.name: f for f in dataclasses.fields(cls)}
    if file_section:
        for key, value in file_section.items():
            if key in fields:
                merged[key] = value
    for name, fld in fields.items():
        env_value = os.environ.get(ENV_PREFIX + name.upper())
        if env_value is not None:
            merged[name] = _coerce(env_value, fld.type)
    for key, value in flags.items():
        if key in fields and value is not None:
            merged[key] = value
    cfg = cls(**{**{}, **merged})
    return cfg.validate() if hasattr(cfg, "validate") else cfg


def load_config_file(path: Optional[str]) -> dict:
    if not path:
        return {}
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return data


def config_section(data: dict, name: str) -> dict:
    if name in data and isinstance(data[name], dict):
        return data[name]
    if any(k in ("train", "model", "generate") for k in data):
        return {}
    return data  # flat file applies to the requested section


# ---- run manifests ---------------------------------------------------


def write_run_manifest(path: Path, command: str, params: dict, outputs: dict) -> None:
    manifest = {
        "command": command,
        "argv": sys.argv[1:],
        "finished": datetime.now(timezone.utc).isoformat(),
        "params": params,
        "outputs": {k: str(v) for k, v in outputs.items()},
        "versions": {
            "evstory": __version__,
            "python": sys.version.split()[0],
            "torch": torch.__version__,
            "numpy": np.__version__,
        },
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _flags_dict(args: argparse.Namespace, names: Sequence[str]) -> dict:
    return {name: getattr(args, name, None) for name in names}


# ---- shared loading --------------------------------------------------


def _load_sequences(path: Optional[str], records) -> dict[str, EventSequence]:
    """Events indexed by story id; extracted on the fly when no file given."""
    if path:
        with open(path) as fh:
            return {seq.story_id: seq for seq in read_event_sequences(fh)}
    parser = RuleBasedDependencyParser()
    return {rec.id: extract_sequence(rec, parser) for rec in records}


def _build_examples(records, sequences, vocab, train_cfg, sim_lookup=None):
    examples = []
    missing = 0
    for rec in records:
        seq = sequences.get(rec.id)
        if seq is None:
            missing += 1
            continue
        sim = sim_lookup(rec) if sim_lookup else None
        examples.append(build_example(rec, seq, vocab, train_cfg, sim_target=sim))
    if missing:
        logger.warning("%d records had no event sequence and were dropped", missing)
    return examples


# ---- subcommands -----------------------------------------------------


def cmd_preprocess(args: argparse.Namespace) -> int:
    options = PreprocessOptions(
        delexicalize_names=not args.keep_names, lowercase=args.lowercase
    )
    lexicon = load_name_lexicon(args.name_lexicon) if args.name_lexicon else None
    stream, manifest = preprocess_corpus(
        args.input, args.dataset, options=options, name_lexicon=lexicon, split=args.split
    )
    out_dir = Path(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    writers: dict[str, object] = {}
    counts: dict[str, int] = {}
    try:
        for record in stream:
            fh = writers.get(record.split)
            if fh is None:
                fh = open(out_dir / f"{record.split}.jsonl", "w", encoding="utf-8")
                writers[record.split] = fh
            fh.write(record.to_json() + "\n")
            counts[record.split] = counts.get(record.split, 0) + 1
    finally:
        for fh in writers.values():
            fh.close()

    (out_dir / "manifest.json").write_text(manifest.to_json() + "\n")
    report = validate_splits(manifest)
    (out_dir / "split_report.json").write_text(json.dumps(report, indent=2) + "\n")
    for split, info in report["splits"].items():
        status = "ok" if info["match"] else "MISMATCH"
        print(
            f"{args.dataset} {split}: {info['actual']} records "
            f"(expected {info['expected']}) {status}"
        )
    if not report["all_match"]:
        print("warning: split sizes differ from the published reference", file=sys.stderr)
    write_run_manifest(
        out_dir / "run.json",
        "preprocess",
        {"dataset": args.dataset, "options": dataclasses.asdict(options)},
        {split: out_dir / f"{split}.jsonl" for split in counts},
    )
    return 0


def cmd_extract_events(args: argparse.Namespace) -> int:
    parser = RuleBasedDependencyParser()
    records = read_records(args.records)
    out_path = Path(args.output)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", encoding="utf-8") as fh:
        count = write_event_sequences(
            (extract_sequence(rec, parser) for rec in records), fh
        )
    print(f"wrote {count} event sequences to {out_path}")
    write_run_manifest(
        out_path.with_suffix(out_path.suffix + ".run.json"),
        "extract-events",
        {"records": args.records},
        {"events": out_path},
    )
    return 0


def cmd_build_graph(args: argparse.Namespace) -> int:
    with open(args.events) as fh:
        graph = build_event_graph(
            read_event_sequences(fh), skip_placeholders=not args.keep_placeholders
        )
    out_path = Path(args.output)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w") as fh:
        write_event_graph(graph, fh)
    edges = sum(graph.edges.values())
    print(f"graph: {len(graph.nodes)} nodes, {len(graph.edges)} unique edges, {edges} total")
    write_run_manifest(
        out_path.with_suffix(out_path.suffix + ".run.json"),
        "build-graph",
        {"events": args.events, "keep_placeholders": args.keep_placeholders},
        {"graph": out_path},
    )
    return 0


_TRAIN_FLAGS = (
    "batch_size", "lr", "adam_eps", "epochs", "lambda_sent", "delta",
    "sent_loss_mode", "seed", "max_source_length", "max_target_length",
    "max_steps", "log_every",
)
_MODEL_FLAGS = (
    "d_model", "num_layers", "num_heads", "d_ff", "dropout", "max_position",
    "beta", "disable_cm", "disable_leading", "disable_events", "disable_sen",
)


def cmd_train(args: argparse.Namespace) -> int:
    file_cfg = load_config_file(args.config)
    train_cfg = layer_config(
        TrainConfig, config_section(file_cfg, "train"), _flags_dict(args, _TRAIN_FLAGS)
    )

    train_records = list(read_records(args.train_records))
    dev_records = list(read_records(args.dev_records)) if args.dev_records else []
    train_seqs = _load_sequences(args.train_events, train_records)
    dev_seqs = _load_sequences(args.dev_events, dev_records) if dev_records else {}

    out_dir = Path(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    if args.vocab:
        vocab = Vocab.from_dict(json.loads(Path(args.vocab).read_text()))
    else:
        vocab = build_training_vocab(
            train_records, list(train_seqs.values()), size=args.vocab_size
        )
    (out_dir / "vocab.json").write_text(json.dumps(vocab.to_dict()) + "\n")

    model_flags = _flags_dict(args, _MODEL_FLAGS)
    model_section = dict(config_section(file_cfg, "model"))
    model_section["vocab_size"] = len(vocab)
    model_section["pad_id"] = vocab.pad_id
    model_cfg = layer_config(ModelConfig, model_section, model_flags)

    torch.manual_seed(train_cfg.seed)
    model = ContextEventModel(model_cfg)
    if args.warm_start_base or args.warm_start_stage1:
        if not (args.warm_start_base and args.warm_start_stage1):
            raise ConfigError("warm start needs both --warm-start-base and --warm-start-stage1")
        warm_start(model, args.warm_start_base, args.warm_start_stage1)
        print("warm start: context encoder from base, rest from stage-1 checkpoint")

    sim_lookup = None
    if model.similarity_head is not None:
        if args.sim_cache:
            cache = read_similarity_cache(args.sim_cache)
            sim_lookup = lambda rec: cache.get(rec.id)  # noqa: E731
        else:
            embedder = make_sentence_embedder(args.embedder)
            sim_lookup = lambda rec: similarity_targets(rec.sentences, embedder)  # noqa: E731

    train_examples = _build_examples(train_records, train_seqs, vocab, train_cfg, sim_lookup)
    dev_examples = _build_examples(dev_records, dev_seqs, vocab, train_cfg, sim_lookup)
    if not train_examples:
        raise ConfigError("no usable training examples")

    result = train(model, train_examples, dev_examples, train_cfg, out_dir=out_dir)
    print(
        f"trained {result.steps} steps; best dev loss {result.best_dev_loss:.4f} "
        f"(epoch {result.best_epoch}); best checkpoint {result.best_path}"
    )
    write_run_manifest(
        out_dir / "run.json",
        "train",
        {
            "train": train_cfg.to_dict(),
            "model": model_cfg.to_dict(),
            "examples": {"train": len(train_examples), "dev": len(dev_examples)},
            "warm_start": bool(args.warm_start_base),
        },
        {"best": result.best_path, "last": result.last_path, "vocab": out_dir / "vocab.json"},
    )
    return 0


_GEN_FLAGS = ("top_p", "max_length", "batch_size", "seed", "greedy")


def cmd_generate(args: argparse.Namespace) -> int:
    file_cfg = load_config_file(args.config)
    gen_cfg = layer_config(
        GenerationConfig, config_section(file_cfg, "generate"), _flags_dict(args, _GEN_FLAGS)
    )
    model, _ = load_checkpoint(args.checkpoint)
    vocab = Vocab.from_dict(json.loads(Path(args.vocab).read_text()))
    records = list(read_records(args.records))
    sequences = _load_sequences(args.events, records)
    prompts = []
    for rec in records:
        seq = sequences.get(rec.id)
        if seq is None:
            logger.warning("no events for %s; skipped", rec.id)
            continue
        prompts.append(build_prompt(rec, seq, vocab))
    stories = generate(model, vocab, prompts, gen_cfg)
    out_path = Path(args.output)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", encoding="utf-8") as fh:
        for story in stories:
            fh.write(json.dumps(story.to_dict(), sort_keys=True) + "\n")
    print(f"wrote {len(stories)} generated stories to {out_path}")
    write_run_manifest(
        out_path.with_suffix(out_path.suffix + ".run.json"),
        "generate",
        {"generation": dataclasses.asdict(gen_cfg), "checkpoint": args.checkpoint},
        {"generated": out_path},
    )
    return 0


def _read_generated(path) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out


def cmd_evaluate(args: argparse.Namespace) -> int:
    gold = {rec.id: rec for rec in read_records(args.records)}
    generated = _read_generated(args.generated)
    refs = []
    cands = []
    matched = 0
    for item in generated:
        rec = gold.get(item["id"])
        if rec is None:
            logger.warning("generated story %s has no gold record; skipped", item["id"])
            continue
        refs.append([rec.leading_context] + rec.sentences)
        cands.append([rec.leading_context] + [list(s) for s in item["sentences"]])
        matched += 1
    if not matched:
        raise ConfigError("no generated stories matched the gold records")

    embed = None
    if args.word_embeddings:
        table = WordEmbeddingTable.load(args.word_embeddings, limit=args.embedding_limit)
        embed = table.sentence_vector
        print(f"loaded {len(table.vectors)} word vectors (dim {table.dimension})")
    elif args.embedder:
        sent_embedder = make_sentence_embedder(args.embedder)
        embed = lambda tokens: sent_embedder.embed(" ".join(tokens))  # noqa: E731

    ppl = None
    if args.checkpoint:
        model, _ = load_checkpoint(args.checkpoint)
        vocab = Vocab.from_dict(json.loads(Path(args.vocab).read_text()))
        records = [gold[item["id"]] for item in generated if item["id"] in gold]
        sequences = _load_sequences(args.events, records)
        train_cfg = TrainConfig()
        examples = _build_examples(records, sequences, vocab, train_cfg)
        ppl = perplexity(model, examples)

    report = evaluate_generated(refs, cands, MetricConfig(), embed=embed, ppl=ppl)
    out_path = Path(args.output)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w") as fh:
        report.to_json(fh)
    summary = {**report.rouge, **report.bleu, **report.lexical_repetition, **report.distinct}
    if ppl is not None:
        summary["ppl"] = ppl
    for key in sorted(summary):
        print(f"{key}: {summary[key]:.4f}")
    for name, curve in report.intra.items():
        print(f"intra {name} aggregate: {curve.aggregate:.4f}")
    write_run_manifest(
        out_path.with_suffix(out_path.suffix + ".run.json"),
        "evaluate",
        {"records": args.records, "generated": args.generated, "stories": matched},
        {"report": out_path},
    )
    return 0


def cmd_plot(args: argparse.Namespace) -> int:
    with open(args.report) as fh:
        report = MetricReport.from_json(fh)
    written = render_report(report, Path(args.output_dir))
    for path in written:
        print(f"wrote {path}")
    write_run_manifest(
        Path(args.output_dir) / "run.json",
        "plot",
        {"report": args.report},
        {str(i): p for i, p in enumerate(written)},
    )
    return 0


# ---- argument parsing ------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evstory",
        description="Event-driven story generation pipeline",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="raw stories to cleaned JSONL records")
    p.add_argument("--dataset", choices=("roc", "wp"), required=True)
    p.add_argument("--input", required=True, help="raw file or directory of split files")
    p.add_argument("--output-dir", required=True)
    p.add_argument("--split", choices=("train", "dev", "test"), default=None,
                   help="split name when --input is a single file")
    p.add_argument("--keep-names", action="store_true", help="skip name delexicalization")
    p.add_argument("--lowercase", action="store_true")
    p.add_argument("--name-lexicon", default=None, help="custom name table (TSV)")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("extract-events", help="records to per-sentence event sequences")
    p.add_argument("--records", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_extract_events)

    p = sub.add_parser("build-graph", help="event sequences to a temporal event graph")
    p.add_argument("--events", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--keep-placeholders", action="store_true")
    p.set_defaults(func=cmd_build_graph)

    p = sub.add_parser("train", help="train the generator")
    p.add_argument("--train-records", required=True)
    p.add_argument("--train-events", default=None)
    p.add_argument("--dev-records", default=None)
    p.add_argument("--dev-events", default=None)
    p.add_argument("--output-dir", required=True)
    p.add_argument("--config", default=None, help="JSON config ({'train':{},'model':{}})")
    p.add_argument("--vocab", default=None, help="existing vocab.json to reuse")
    p.add_argument("--vocab-size", type=int, default=30000)
    p.add_argument("--sim-cache", default=None, help="precomputed similarity targets (.bin)")
    p.add_argument("--embedder", choices=("hash", "sbert"), default="hash")
    p.add_argument("--warm-start-base", default=None)
    p.add_argument("--warm-start-stage1", default=None)
    for name in ("batch-size", "epochs", "max-steps", "seed", "log-every",
                 "max-source-length", "max-target-length"):
        p.add_argument(f"--{name}", type=int, default=None)
    for name in ("lr", "adam-eps", "lambda-sent", "delta"):
        p.add_argument(f"--{name}", type=float, default=None)
    p.add_argument("--sent-loss-mode", choices=("floor", "hinge"), default=None)
    for name in ("d-model", "num-layers", "num-heads", "d-ff", "max-position"):
        p.add_argument(f"--{name}", type=int, default=None)
    for name in ("dropout", "beta"):
        p.add_argument(f"--{name}", type=float, default=None)
    for name in ("disable-cm", "disable-leading", "disable-events", "disable-sen"):
        p.add_argument(f"--{name}", action="store_const", const=True, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="sample stories from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--records", required=True)
    p.add_argument("--events", default=None)
    p.add_argument("--output", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--top-p", type=float, default=None)
    p.add_argument("--max-length", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--greedy", action="store_const", const=True, default=None)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="score generated stories against gold")
    p.add_argument("--records", required=True, help="gold records JSONL")
    p.add_argument("--generated", required=True, help="generated stories JSONL")
    p.add_argument("--output", required=True, help="metric report JSON")
    p.add_argument("--checkpoint", default=None, help="model for perplexity")
    p.add_argument("--vocab", default=None)
    p.add_argument("--events", default=None)
    p.add_argument("--word-embeddings", default=None,
                   help="word vectors (text format) for coherence/relevance")
    p.add_argument("--embedding-limit", type=int, default=None)
    p.add_argument("--embedder", choices=("hash", "sbert"), default=None,
                   help="sentence embedder fallback for coherence/relevance")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("plot", help="render curves from a metric report")
    p.add_argument("--report", required=True)
    p.add_argument("--output-dir", required=True)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: missing file: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 130
    except Exception as exc:  # pragma: no cover - last resort reporting
        logger.exception("command failed")
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
