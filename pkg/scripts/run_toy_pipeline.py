#!/usr/bin/env python3
"""Runs the whole CLI pipeline on the bundled toy fixture.

Useful as a quick live check and as the template for real-data runs:

    python scripts/run_toy_pipeline.py --work-dir /tmp/toy_run
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from evstory.cli import main as cli

FIXTURE = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "toy_roc"


def run(argv: list[str]) -> None:
    print("+ evstory " + " ".join(argv))
    code = cli(argv)
    if code != 0:
        sys.exit(f"step failed with exit code {code}")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--work-dir", type=Path, default=Path("toy_run"))
    parser.add_argument("--steps", type=int, default=120, help="training steps")
    args = parser.parse_args()
    work = args.work_dir
    data = work / "data"
    run(["preprocess", "--dataset", "roc", "--input", str(FIXTURE),
         "--output-dir", str(data)])
    for split in ("train", "dev", "test"):
        run(["extract-events", "--records", str(data / f"{split}.jsonl"),
             "--output", str(data / f"{split}.events.jsonl")])
    run(["build-graph", "--events", str(data / "train.events.jsonl"),
         "--output", str(data / "graph.json")])
    model_dir = work / "model"
    run(["train",
         "--train-records", str(data / "train.jsonl"),
         "--train-events", str(data / "train.events.jsonl"),
         "--dev-records", str(data / "dev.jsonl"),
         "--dev-events", str(data / "dev.events.jsonl"),
         "--output-dir", str(model_dir),
         "--d-model", "64", "--num-layers", "2", "--num-heads", "2",
         "--d-ff", "128", "--dropout", "0.0", "--max-position", "128",
         "--batch-size", "8", "--lr", "3e-3", "--epochs", "1000",
         "--max-steps", str(args.steps), "--log-every", "20"])
    run(["generate",
         "--checkpoint", str(model_dir / "best.pt"),
         "--vocab", str(model_dir / "vocab.json"),
         "--records", str(data / "test.jsonl"),
         "--events", str(data / "test.events.jsonl"),
         "--output", str(work / "generated.jsonl"),
         "--max-length", "64"])
    run(["evaluate",
         "--records", str(data / "test.jsonl"),
         "--generated", str(work / "generated.jsonl"),
         "--checkpoint", str(model_dir / "best.pt"),
         "--vocab", str(model_dir / "vocab.json"),
         "--events", str(data / "test.events.jsonl"),
         "--embedder", "hash",
         "--output", str(work / "report.json")])
    run(["plot", "--report", str(work / "report.json"),
         "--output-dir", str(work / "plots")])
    print(f"pipeline complete; artifacts under {work}")


if __name__ == "__main__":
    main()
