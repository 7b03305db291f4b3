"""Corpus ingestion: raw stories -> canonical JSONL records.

A record keeps the first sentence as the leading context and the rest as
the story body. ROC-style records carry exactly four body sentences with
person names masked; WP-style records keep at most ten body sentences.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .providers import RegexSentenceSplitter, SentenceSplitter
from .vocab import FEMALE, MALE, NEUTRAL, tokenize

logger = logging.getLogger(__name__)

SPLITS = ("train", "dev", "test")

EXPECTED_SPLIT_SIZES = {
    "roc": {"train": 88344, "dev": 4908, "test": 4909},
    "wp": {"train": 26758, "dev": 2000, "test": 2000},
}

ROC_BODY_SENTENCES = 4
WP_MAX_BODY_SENTENCES = 10

_GENDER_TOKENS = {"MALE": MALE, "FEMALE": FEMALE, "NEUTRAL": NEUTRAL}


@dataclass
class StoryRecord:
    id: str
    dataset: str  # "roc" | "wp"
    split: str  # "train" | "dev" | "test"
    leading_context: list[str]
    sentences: list[list[str]]

    def validate(self) -> None:
        if self.split not in SPLITS:
            raise ValueError(f"{self.id}: unknown split {self.split!r}")
        if not self.leading_context:
            raise ValueError(f"{self.id}: empty leading context")
        if not self.sentences or any(not s for s in self.sentences):
            raise ValueError(f"{self.id}: story body has an empty sentence")
        if self.dataset == "roc" and len(self.sentences) != ROC_BODY_SENTENCES:
            raise ValueError(
                f"{self.id}: roc record needs {ROC_BODY_SENTENCES} body sentences, "
                f"got {len(self.sentences)}"
            )
        if self.dataset == "wp" and len(self.sentences) > WP_MAX_BODY_SENTENCES:
            raise ValueError(f"{self.id}: wp record exceeds {WP_MAX_BODY_SENTENCES} sentences")

    def to_json(self) -> str:
        return json.dumps(asdict(self), ensure_ascii=False, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "StoryRecord":
        d = json.loads(line)
        return cls(
            id=d["id"],
            dataset=d["dataset"],
            split=d["split"],
            leading_context=list(d["leading_context"]),
            sentences=[list(s) for s in d["sentences"]],
        )


@dataclass
class PreprocessOptions:
    delexicalize_names: bool = True  # only applied to roc
    lowercase: bool = False


@dataclass
class DatasetManifest:
    dataset: str
    counts: dict[str, int] = field(default_factory=lambda: {s: 0 for s in SPLITS})
    skipped: dict[str, int] = field(default_factory=lambda: {s: 0 for s in SPLITS})
    truncated: dict[str, int] = field(default_factory=lambda: {s: 0 for s in SPLITS})
    source_paths: dict[str, str] = field(default_factory=dict)
    options: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        d = json.loads(text)
        m = cls(dataset=d["dataset"])
        m.counts = dict(d["counts"])
        m.skipped = dict(d.get("skipped", {}))
        m.truncated = dict(d.get("truncated", {}))
        m.source_paths = dict(d.get("source_paths", {}))
        m.options = dict(d.get("options", {}))
        return m


def load_name_lexicon(path: Path | str) -> dict[str, str]:
    """Read a name -> {MALE, FEMALE, NEUTRAL} table (tab separated)."""
    lexicon = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2 or parts[1] not in _GENDER_TOKENS:
            raise ValueError(f"{path}:{lineno}: bad lexicon line {line!r}")
        lexicon[parts[0]] = parts[1]
    return lexicon


def default_name_lexicon() -> dict[str, str]:
    return load_name_lexicon(Path(__file__).parent / "data" / "names.tsv")


def delexicalize(tokens: Sequence[str], name_lexicon: dict[str, str]) -> list[str]:
    """Replace name tokens with [MALE]/[FEMALE]/[NEUTRAL]; length preserved."""
    out = []
    for tok in tokens:
        gender = name_lexicon.get(tok)
        out.append(_GENDER_TOKENS[gender] if gender is not None else tok)
    return out


class RecordRejected(ValueError):
    """Raised when a raw story cannot become a valid record."""


def _read_raw_stories(path: Path) -> Iterator[tuple[str, str]]:
    """Yield (story_id, raw_text) from plain text (one story per line) or
    JSON lines with "id" and "text" (or "story") fields."""
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            if line.startswith("{"):
                d = json.loads(line)
                text = d.get("text") or d.get("story") or ""
                yield str(d.get("id", i)), text
            else:
                yield str(i), line


def story_to_record(
    story_id: str,
    text: str,
    dataset: str,
    split: str,
    splitter: SentenceSplitter,
    options: PreprocessOptions,
    name_lexicon: dict[str, str] | None,
) -> tuple[StoryRecord, bool]:
    """Build one record; returns (record, was_truncated).

    Raises RecordRejected when no story body remains or an invariant fails.
    """
    raw_sentences = splitter.split(text)
    if len(raw_sentences) < 2:
        raise RecordRejected(f"{story_id}: no story body after the leading sentence")

    leading, body = raw_sentences[0], raw_sentences[1:]
    truncated = False
    if dataset == "roc":
        if len(body) < ROC_BODY_SENTENCES:
            raise RecordRejected(
                f"{story_id}: roc story has {len(body)} body sentences, need {ROC_BODY_SENTENCES}"
            )
        if len(body) > ROC_BODY_SENTENCES:
            body = body[:ROC_BODY_SENTENCES]
            truncated = True
    elif dataset == "wp":
        if len(body) > WP_MAX_BODY_SENTENCES:
            body = body[:WP_MAX_BODY_SENTENCES]
            truncated = True
    else:
        raise ValueError(f"unknown dataset {dataset!r}")

    lower = options.lowercase
    lead_tokens = tokenize(leading, lowercase=lower)
    body_tokens = [tokenize(s, lowercase=lower) for s in body]
    if dataset == "roc" and options.delexicalize_names and name_lexicon:
        lead_tokens = delexicalize(lead_tokens, name_lexicon)
        body_tokens = [delexicalize(s, name_lexicon) for s in body_tokens]

    record = StoryRecord(
        id=story_id,
        dataset=dataset,
        split=split,
        leading_context=lead_tokens,
        sentences=body_tokens,
    )
    record.validate()
    return record, truncated


def preprocess_corpus(
    raw_path: Path | str,
    dataset: str,
    options: PreprocessOptions | None = None,
    splitter: SentenceSplitter | None = None,
    name_lexicon: dict[str, str] | None = None,
    split: str | None = None,
) -> tuple[Iterator[StoryRecord], DatasetManifest]:
    """Stream records from a raw split file or a directory of split files.

    A directory must contain one file per split whose name contains
    "train", "dev"/"valid" or "test". A single file maps to `split`
    (default "train"). The manifest is complete only after the stream is
    fully consumed.
    """
    raw_path = Path(raw_path)
    options = options or PreprocessOptions()
    splitter = splitter or RegexSentenceSplitter()
    if dataset == "roc" and options.delexicalize_names and name_lexicon is None:
        name_lexicon = default_name_lexicon()

    if raw_path.is_dir():
        sources = {}
        for f in sorted(raw_path.iterdir()):
            name = f.name.lower()
            if "train" in name:
                sources["train"] = f
            elif "dev" in name or "valid" in name:
                sources["dev"] = f
            elif "test" in name:
                sources["test"] = f
        if not sources:
            raise FileNotFoundError(f"{raw_path}: no train/dev/test files found")
    else:
        if not raw_path.exists():
            raise FileNotFoundError(str(raw_path))
        sources = {split or "train": raw_path}

    manifest = DatasetManifest(dataset=dataset)
    manifest.source_paths = {s: str(p) for s, p in sources.items()}
    manifest.options = asdict(options)

    def generate() -> Iterator[StoryRecord]:
        for split_name, path in sources.items():
            for story_id, text in _read_raw_stories(path):
                try:
                    record, truncated = story_to_record(
                        f"{dataset}-{split_name}-{story_id}",
                        text,
                        dataset,
                        split_name,
                        splitter,
                        options,
                        name_lexicon,
                    )
                except RecordRejected as exc:
                    logger.warning("skipping story: %s", exc)
                    manifest.skipped[split_name] = manifest.skipped.get(split_name, 0) + 1
                    continue
                manifest.counts[split_name] = manifest.counts.get(split_name, 0) + 1
                if truncated:
                    manifest.truncated[split_name] = manifest.truncated.get(split_name, 0) + 1
                yield record

    return generate(), manifest


def validate_splits(manifest: DatasetManifest) -> dict:
    """Compare manifest counts against the published split sizes.

    Mismatches are warnings, not errors: raw distributions drift.
    """
    expected = EXPECTED_SPLIT_SIZES.get(manifest.dataset, {})
    report = {"dataset": manifest.dataset, "splits": {}, "all_match": True}
    for split in SPLITS:
        want = expected.get(split)
        have = manifest.counts.get(split, 0)
        match = want is not None and have == want
        report["splits"][split] = {"expected": want, "actual": have, "match": match}
        if not match:
            report["all_match"] = False
    return report


def write_records(records: Iterable[StoryRecord], out_path: Path | str) -> int:
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    n = 0
    with open(out_path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(record.to_json() + "\n")
            n += 1
    return n


def read_records(path: Path | str) -> Iterator[StoryRecord]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield StoryRecord.from_json(line)
