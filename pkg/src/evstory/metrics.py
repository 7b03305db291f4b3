"""Automatic evaluation: perplexity, n-gram overlap, diversity, and
embedding-based intra-story measures.

Intra-story measures treat the leading context as sentence 1, so the
curves start at sentence index 2 (the first generated sentence):

  repetition(i)  share of sentence i trigrams already seen in sentences < i
  coherence(i)   cosine(v_i, v_{i-1}) of mean-pooled word embeddings
  relevance(i)   cosine(v_i, v_1)
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F

from .model import ContextEventModel
from .providers import cosine
from .training import TrainingExample, collate

Tokens = Sequence[str]


def ngrams(tokens: Tokens, n: int) -> list[tuple[str, ...]]:
    if n <= 0:
        raise ValueError("n must be positive")
    return [tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)]


# ---- perplexity ------------------------------------------------------


def perplexity(
    model: ContextEventModel, examples: Sequence[TrainingExample], batch_size: int = 15
) -> float:
    """Corpus perplexity: exp of total NLL over total target tokens."""
    model.eval()
    pad_id = model.config.pad_id
    total_nll = 0.0
    total_tokens = 0
    with torch.no_grad():
        for start in range(0, len(examples), batch_size):
            batch = collate(examples[start : start + batch_size], pad_id)
            output = model(
                None if model.context_encoder is None else batch.context_ids,
                None if model.event_encoder is None else batch.event_ids,
                batch.decoder_input,
            )
            nll = F.cross_entropy(
                output.logits.reshape(-1, output.logits.size(-1)),
                batch.labels.reshape(-1),
                ignore_index=pad_id,
                reduction="sum",
            )
            total_nll += float(nll)
            total_tokens += int((batch.labels != pad_id).sum())
    if total_tokens == 0:
        return math.nan
    return math.exp(total_nll / total_tokens)


# ---- overlap metrics -------------------------------------------------


def rouge_n_pair(candidate: Tokens, reference: Tokens, n: int) -> tuple[float, float, float]:
    """(precision, recall, f1) on clipped n-gram counts for one pair."""
    cand = Counter(ngrams(candidate, n))
    ref = Counter(ngrams(reference, n))
    overlap = sum((cand & ref).values())
    c_total = sum(cand.values())
    r_total = sum(ref.values())
    precision = overlap / c_total if c_total else 0.0
    recall = overlap / r_total if r_total else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def rouge_n(candidates: Sequence[Tokens], references: Sequence[Tokens], n: int) -> float:
    """Mean per-story ROUGE-n F1."""
    if len(candidates) != len(references):
        raise ValueError("candidate/reference count mismatch")
    if not candidates:
        return 0.0
    return float(
        np.mean([rouge_n_pair(c, r, n)[2] for c, r in zip(candidates, references)])
    )


def _lcs_length(a: Tokens, b: Tokens) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l_pair(candidate: Tokens, reference: Tokens) -> tuple[float, float, float]:
    lcs = _lcs_length(candidate, reference)
    precision = lcs / len(candidate) if candidate else 0.0
    recall = lcs / len(reference) if reference else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def rouge_l(candidates: Sequence[Tokens], references: Sequence[Tokens]) -> float:
    if len(candidates) != len(references):
        raise ValueError("candidate/reference count mismatch")
    if not candidates:
        return 0.0
    return float(np.mean([rouge_l_pair(c, r)[2] for c, r in zip(candidates, references)]))


def bleu_corpus(
    candidates: Sequence[Tokens], references: Sequence[Tokens], max_n: int = 4
) -> float:
    """Corpus BLEU with uniform weights and the standard brevity penalty.

    Clipped match and candidate counts are pooled over the corpus before
    taking precisions, so sentence-level zeros do not annihilate the score
    unless an order has no matches anywhere.
    """
    if len(candidates) != len(references):
        raise ValueError("candidate/reference count mismatch")
    if not candidates:
        return 0.0
    matches = [0] * max_n
    totals = [0] * max_n
    cand_len = 0
    ref_len = 0
    for cand, ref in zip(candidates, references):
        cand_len += len(cand)
        ref_len += len(ref)
        for n in range(1, max_n + 1):
            c_counts = Counter(ngrams(cand, n))
            r_counts = Counter(ngrams(ref, n))
            matches[n - 1] += sum((c_counts & r_counts).values())
            totals[n - 1] += sum(c_counts.values())
    if any(t == 0 for t in totals):
        return 0.0
    precisions = [m / t for m, t in zip(matches, totals)]
    if any(p == 0.0 for p in precisions):
        return 0.0
    log_avg = sum(math.log(p) for p in precisions) / max_n
    bp = 1.0 if cand_len > ref_len else math.exp(1.0 - ref_len / max(cand_len, 1))
    return float(bp * math.exp(log_avg))


# ---- diversity and repetition ----------------------------------------


def distinct_n(stories: Sequence[Tokens], n: int) -> float:
    """Unique n-grams over total n-grams, pooled across the corpus."""
    seen: set = set()
    total = 0
    for story in stories:
        grams = ngrams(story, n)
        total += len(grams)
        seen.update(grams)
    return len(seen) / total if total else 0.0


def lexical_repetition(
    stories: Sequence[Tokens], repeats: int = 2, gram: int = 4
) -> float:
    """Share of stories with some gram-gram occurring at least `repeats` times."""
    if not stories:
        return 0.0
    flagged = 0
    for story in stories:
        counts = Counter(ngrams(story, gram))
        if counts and max(counts.values()) >= repeats:
            flagged += 1
    return flagged / len(stories)


# ---- intra-story curves ----------------------------------------------

Story = Sequence[Tokens]  # sentence token lists; index 0 is the leading context


@dataclass
class IntraCurve:
    by_index: dict[int, float] = field(default_factory=dict)
    aggregate: float = 0.0

    def to_dict(self) -> dict:
        return {
            "by_index": {str(k): v for k, v in sorted(self.by_index.items())},
            "aggregate": self.aggregate,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "IntraCurve":
        return cls(
            by_index={int(k): float(v) for k, v in data["by_index"].items()},
            aggregate=float(data["aggregate"]),
        )


def _curve(values: dict[int, list[float]]) -> IntraCurve:
    by_index = {i: float(np.mean(v)) for i, v in sorted(values.items()) if v}
    flat = [x for v in values.values() for x in v]
    return IntraCurve(by_index=by_index, aggregate=float(np.mean(flat)) if flat else 0.0)


def intra_story_repetition(stories: Sequence[Story], gram: int = 3) -> IntraCurve:
    values: dict[int, list[float]] = {}
    for story in stories:
        seen: set = set()
        for i, sent in enumerate(story, start=1):
            grams = ngrams(sent, gram)
            if i >= 2:
                ratio = (
                    sum(1 for g in grams if g in seen) / len(grams) if grams else 0.0
                )
                values.setdefault(i, []).append(ratio)
            seen.update(grams)
    return _curve(values)


def intra_coherence(
    stories: Sequence[Story], embed: Callable[[Tokens], np.ndarray]
) -> IntraCurve:
    values: dict[int, list[float]] = {}
    for story in stories:
        vecs = [embed(sent) for sent in story]
        for i in range(2, len(vecs) + 1):
            values.setdefault(i, []).append(cosine(vecs[i - 1], vecs[i - 2]))
    return _curve(values)


def intra_relevance(
    stories: Sequence[Story], embed: Callable[[Tokens], np.ndarray]
) -> IntraCurve:
    values: dict[int, list[float]] = {}
    for story in stories:
        vecs = [embed(sent) for sent in story]
        for i in range(2, len(vecs) + 1):
            values.setdefault(i, []).append(cosine(vecs[i - 1], vecs[0]))
    return _curve(values)


# ---- word embeddings -------------------------------------------------


class WordEmbeddingTable:
    """Static word vectors in the text format `word v1 v2 ... vd`."""

    def __init__(self, vectors: dict[str, np.ndarray], dimension: int):
        self.vectors = vectors
        self.dimension = dimension

    @classmethod
    def load(cls, path, limit: Optional[int] = None) -> "WordEmbeddingTable":
        vectors: dict[str, np.ndarray] = {}
        dimension = 0
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                parts = line.rstrip("\n").split(" ")
                if len(parts) < 3:
                    continue
                word = parts[0]
                vec = np.asarray([float(x) for x in parts[1:]], dtype=np.float32)
                if dimension == 0:
                    dimension = vec.shape[0]
                elif vec.shape[0] != dimension:
                    continue
                vectors[word] = vec
                if limit is not None and len(vectors) >= limit:
                    break
        if not vectors:
            raise ValueError(f"{path}: no vectors loaded")
        return cls(vectors, dimension)

    def sentence_vector(self, tokens: Tokens) -> np.ndarray:
        found = [self.vectors[t.lower()] for t in tokens if t.lower() in self.vectors]
        if not found:
            return np.zeros(self.dimension, dtype=np.float32)
        return np.mean(found, axis=0)


# ---- report ----------------------------------------------------------


@dataclass
class MetricReport:
    ppl: Optional[float] = None
    rouge: dict = field(default_factory=dict)
    bleu: dict = field(default_factory=dict)
    lexical_repetition: dict = field(default_factory=dict)
    distinct: dict = field(default_factory=dict)
    intra: dict = field(default_factory=dict)  # name -> IntraCurve
    counts: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "ppl": self.ppl,
            "rouge": self.rouge,
            "bleu": self.bleu,
            "lexical_repetition": self.lexical_repetition,
            "distinct": self.distinct,
            "intra": {k: v.to_dict() for k, v in self.intra.items()},
            "counts": self.counts,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MetricReport":
        return cls(
            ppl=data.get("ppl"),
            rouge=dict(data.get("rouge", {})),
            bleu=dict(data.get("bleu", {})),
            lexical_repetition=dict(data.get("lexical_repetition", {})),
            distinct=dict(data.get("distinct", {})),
            intra={k: IntraCurve.from_dict(v) for k, v in data.get("intra", {}).items()},
            counts=dict(data.get("counts", {})),
        )

    def to_json(self, fh) -> None:
        json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")

    @classmethod
    def from_json(cls, fh) -> "MetricReport":
        return cls.from_dict(json.load(fh))


@dataclass
class MetricConfig:
    rouge_ns: tuple = (1, 2)
    include_rouge_l: bool = True
    bleu_ns: tuple = (1, 2, 3, 4)
    lr_repeats: tuple = (2, 3)
    lr_gram: int = 4
    distinct_ns: tuple = (1, 2, 3, 4)
    intra_gram: int = 3


def evaluate_generated(
    reference_stories: Sequence[Story],
    generated_stories: Sequence[Story],
    cfg: MetricConfig = MetricConfig(),
    embed: Optional[Callable[[Tokens], np.ndarray]] = None,
    ppl: Optional[float] = None,
) -> MetricReport:
    """Full report over sentence-segmented stories.

    Both inputs include the leading context as sentence 1; overlap and
    diversity metrics use only the generated/reference bodies (sentences
    from index 2 on), flattened per story.
    """
    if len(reference_stories) != len(generated_stories):
        raise ValueError("reference/generated count mismatch")

    def flatten_body(story: Story) -> list[str]:
        return [t for sent in story[1:] for t in sent]

    refs = [flatten_body(s) for s in reference_stories]
    cands = [flatten_body(s) for s in generated_stories]

    report = MetricReport(ppl=ppl)
    for n in cfg.rouge_ns:
        report.rouge[f"rouge-{n}"] = rouge_n(cands, refs, n)
    if cfg.include_rouge_l:
        report.rouge["rouge-l"] = rouge_l(cands, refs)
    for n in cfg.bleu_ns:
        report.bleu[f"bleu-{n}"] = bleu_corpus(cands, refs, max_n=n)
    for r in cfg.lr_repeats:
        report.lexical_repetition[f"lr-{r}"] = lexical_repetition(
            cands, repeats=r, gram=cfg.lr_gram
        )
    for n in cfg.distinct_ns:
        report.distinct[f"d-{n}"] = distinct_n(cands, n)
    report.intra["repetition"] = intra_story_repetition(
        generated_stories, gram=cfg.intra_gram
    )
    if embed is not None:
        report.intra["coherence"] = intra_coherence(generated_stories, embed)
        report.intra["relevance"] = intra_relevance(generated_stories, embed)
    report.counts = {
        "stories": len(generated_stories),
        "reference_tokens": sum(len(r) for r in refs),
        "generated_tokens": sum(len(c) for c in cands),
    }
    return report
