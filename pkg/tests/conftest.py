"""Shared fixtures: the toy corpus, a tiny model config, and helpers."""

from __future__ import annotations

from pathlib import Path

import pytest
import torch

from evstory.corpus import preprocess_corpus
from evstory.events import extract_sequence
from evstory.model import ContextEventModel, ModelConfig
from evstory.training import TrainConfig, build_example, build_training_vocab

FIXTURE_DIR = Path(__file__).parent / "fixtures"
TOY_DIR = FIXTURE_DIR / "toy_roc"


@pytest.fixture(scope="session")
def toy_records():
    stream, _ = preprocess_corpus(TOY_DIR, "roc")
    records = {"train": [], "dev": [], "test": []}
    for rec in stream:
        records[rec.split].append(rec)
    return records


@pytest.fixture(scope="session")
def toy_sequences(toy_records):
    return {
        split: {rec.id: extract_sequence(rec) for rec in records}
        for split, records in toy_records.items()
    }


@pytest.fixture(scope="session")
def toy_vocab(toy_records, toy_sequences):
    return build_training_vocab(
        toy_records["train"], list(toy_sequences["train"].values()), max_sentences=4
    )


def tiny_config(vocab, **overrides) -> ModelConfig:
    base = dict(
        vocab_size=len(vocab),
        d_model=32,
        num_layers=2,
        num_heads=2,
        d_ff=64,
        dropout=0.0,
        max_position=128,
        pad_id=vocab.pad_id,
    )
    base.update(overrides)
    return ModelConfig(**base)


def tiny_model(vocab, seed: int = 0, **overrides) -> ContextEventModel:
    torch.manual_seed(seed)
    return ContextEventModel(tiny_config(vocab, **overrides))


@pytest.fixture(scope="session")
def toy_examples(toy_records, toy_sequences, toy_vocab):
    cfg = TrainConfig(batch_size=8)
    return [
        build_example(rec, toy_sequences["train"][rec.id], toy_vocab, cfg)
        for rec in toy_records["train"]
    ]


@pytest.fixture(scope="session")
def pipeline(tmp_path_factory):
    """One run of every CLI subcommand, in pipeline order, on the toy corpus."""
    from evstory.cli import main

    root = tmp_path_factory.mktemp("pipeline")
    data = root / "data"
    run = root / "run"
    paths = {
        "root": root,
        "data": data,
        "train_records": data / "train.jsonl",
        "dev_records": data / "dev.jsonl",
        "test_records": data / "test.jsonl",
        "events": root / "events" / "train.jsonl",
        "test_events": root / "events" / "test.jsonl",
        "graph": root / "graph.json",
        "run": run,
        "generated": root / "generated.jsonl",
        "report": root / "report.json",
        "plots": root / "plots",
    }

    assert main(["preprocess", "--dataset", "roc", "--input", str(TOY_DIR),
                 "--output-dir", str(data)]) == 0
    assert main(["extract-events", "--records", str(paths["train_records"]),
                 "--output", str(paths["events"])]) == 0
    assert main(["extract-events", "--records", str(paths["test_records"]),
                 "--output", str(paths["test_events"])]) == 0
    assert main(["build-graph", "--events", str(paths["events"]),
                 "--output", str(paths["graph"])]) == 0
    assert main([
        "train",
        "--train-records", str(paths["train_records"]),
        "--train-events", str(paths["events"]),
        "--dev-records", str(paths["dev_records"]),
        "--output-dir", str(run),
        "--d-model", "32", "--num-layers", "1", "--num-heads", "2", "--d-ff", "64",
        "--dropout", "0.0", "--batch-size", "8", "--epochs", "1", "--max-steps", "2",
        "--lr", "1e-3", "--seed", "0",
    ]) == 0
    assert main([
        "generate",
        "--checkpoint", str(run / "best.pt"),
        "--vocab", str(run / "vocab.json"),
        "--records", str(paths["test_records"]),
        "--events", str(paths["test_events"]),
        "--output", str(paths["generated"]),
        "--max-length", "12", "--seed", "0",
    ]) == 0
    assert main([
        "evaluate",
        "--records", str(paths["test_records"]),
        "--generated", str(paths["generated"]),
        "--output", str(paths["report"]),
        "--checkpoint", str(run / "best.pt"),
        "--vocab", str(run / "vocab.json"),
        "--events", str(paths["test_events"]),
        "--embedder", "hash",
    ]) == 0
    assert main(["plot", "--report", str(paths["report"]),
                 "--output-dir", str(paths["plots"])]) == 0
    return paths
