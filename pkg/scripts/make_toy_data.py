#!/usr/bin/env python3
"""Generates the deterministic toy story fixture used by the test suite.

Writes raw five-sentence stories (one per line) in the four-sentence-body
shape: 32 train, 8 dev, 8 test. Every sentence has a clear verb root so
event extraction never needs the placeholder event. Output is a pure
function of the templates below; re-running reproduces the files exactly.
"""

from __future__ import annotations

import argparse
import itertools
from pathlib import Path

NAMES = [
    ("Ken", "He", "his"),
    ("Anna", "She", "her"),
    ("Tom", "He", "his"),
    ("Emma", "She", "her"),
    ("Jack", "He", "his"),
    ("Lily", "She", "her"),
    ("Sam", "He", "his"),
    ("Grace", "She", "her"),
]

TEMPLATES = [
    (
        "{name} wanted a new {thing}.",
        "{pron} went to the {place}.",
        "{pron} saw a small {thing} there.",
        "{pron} took it home quickly.",
        "{pron} was very happy.",
    ),
    (
        "{name} missed {poss} dog.",
        "{pron} walked around the {place}.",
        "{pron} noticed something strange outside.",
        "{pron} found the dog there.",
        "{pron} hugged it warmly.",
    ),
    (
        "{name} planned a big dinner.",
        "{pron} bought fresh food at the {place}.",
        "{pron} cooked the meal slowly.",
        "{pron} served it to {poss} friends.",
        "They liked it very much.",
    ),
    (
        "{name} needed to get a {thing}.",
        "{pron} saved money for a month.",
        "{pron} picked up the {thing} on Friday.",
        "{pron} showed it to everyone.",
        "{pron} felt very proud.",
    ),
    (
        "{name} wanted to learn to swim.",
        "{pron} joined a class at the {place}.",
        "{pron} practiced every single day.",
        "{pron} won a small race later.",
        "{pron} celebrated with {poss} family.",
    ),
    (
        "{name} shut down the old {thing}.",
        "{pron} cleaned the whole {place}.",
        "{pron} fixed the broken parts carefully.",
        "It turned out to be easy.",
        "{pron} finished before dinner.",
    ),
]

THINGS = ["car", "bike", "phone", "lamp"]
PLACES = ["store", "park", "school", "market"]


def build_stories() -> list[str]:
    stories = []
    combos = itertools.product(TEMPLATES, NAMES, zip(THINGS, PLACES))
    for template, (name, pron, poss), (thing, place) in combos:
        sentences = [
            s.format(name=name, pron=pron, poss=poss, thing=thing, place=place)
            for s in template
        ]
        stories.append(" ".join(sentences))
    return stories


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument(
        "--output-dir",
        default=Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "toy_roc",
        type=Path,
    )
    args = parser.parse_args()
    stories = build_stories()
    assert len(stories) >= 48, f"only {len(stories)} stories generated"
    splits = {
        "train.txt": stories[:32],
        "dev.txt": stories[32:40],
        "test.txt": stories[40:48],
    }
    args.output_dir.mkdir(parents=True, exist_ok=True)
    for filename, lines in splits.items():
        path = args.output_dir / filename
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        print(f"wrote {len(lines)} stories to {path}")


if __name__ == "__main__":
    main()
