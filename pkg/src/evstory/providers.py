"""Pluggable providers: sentence splitting and sentence embeddings.

The defaults are deterministic and fully offline so that every pipeline
stage is reproducible byte-for-byte. Heavier third-party backends can be
dropped in through the same interfaces.
"""

from __future__ import annotations

import hashlib
import re
from typing import Protocol, Sequence

import numpy as np


class SentenceSplitter(Protocol):
    def split(self, text: str) -> list[str]: ...


class RegexSentenceSplitter:
    """Deterministic rule-based splitter on terminal punctuation.

    Keeps the terminal mark with its sentence and avoids splitting on
    common abbreviations and initials.
    """

    _ABBREV = {"mr", "mrs", "ms", "dr", "st", "jr", "sr", "prof", "etc", "vs", "inc"}
    _BOUNDARY_RE = re.compile(r"([.!?]+)(\s+|$)")

    def split(self, text: str) -> list[str]:
        text = " ".join(text.split())
        if not text:
            return []
        sentences = []
        start = 0
        for m in self._BOUNDARY_RE.finditer(text):
            prev_word = text[start : m.start(1)].rsplit(None, 1)
            if prev_word:
                w = prev_word[-1].rstrip(".").lower()
                if w in self._ABBREV or (len(w) == 1 and w.isalpha()):
                    continue
            sentences.append(text[start : m.end(1)].strip())
            start = m.end(0)
        tail = text[start:].strip()
        if tail:
            sentences.append(tail)
        return [s for s in sentences if s]


class SentenceEmbedder(Protocol):
    dimension: int

    def embed(self, sentence: str) -> np.ndarray: ...


class HashingSentenceEmbedder:
    """Offline bag-of-words embedding via feature hashing.

    Each word hashes to a fixed pseudo-random unit direction; a sentence is
    the L2-normalised sum. Shared words raise the cosine of two sentences,
    which is the only structure the similarity targets need, and the whole
    thing is deterministic with no model download.
    """

    def __init__(self, dimension: int = 64):
        self.dimension = dimension

    def _word_vector(self, word: str) -> np.ndarray:
        digest = hashlib.blake2b(word.encode("utf-8"), digest_size=8).digest()
        rng = np.random.default_rng(int.from_bytes(digest, "little"))
        v = rng.standard_normal(self.dimension)
        return v / np.linalg.norm(v)

    def embed(self, sentence: str) -> np.ndarray:
        from .vocab import tokenize

        words = tokenize(sentence, lowercase=True)
        if not words:
            return np.zeros(self.dimension)
        total = np.zeros(self.dimension)
        for w in words:
            total += self._word_vector(w)
        norm = np.linalg.norm(total)
        return total / norm if norm > 0 else total


class TransformerSentenceEmbedder:
    """Adapter over a pretrained sentence-transformer checkpoint.

    Requires the optional `sentence-transformers` dependency and network or
    cached weights; prefer HashingSentenceEmbedder for offline runs.
    """

    def __init__(self, model_name: str = "all-MiniLM-L6-v2"):
        from sentence_transformers import SentenceTransformer

        self._model = SentenceTransformer(model_name)
        self.dimension = int(self._model.get_sentence_embedding_dimension())

    def embed(self, sentence: str) -> np.ndarray:
        return np.asarray(self._model.encode([sentence])[0], dtype=np.float64)


def make_sentence_embedder(kind: str, dimension: int = 64) -> SentenceEmbedder:
    if kind == "hash":
        return HashingSentenceEmbedder(dimension=dimension)
    if kind == "sbert":
        return TransformerSentenceEmbedder()
    raise ValueError(f"unknown sentence embedder {kind!r} (expected 'hash' or 'sbert')")


def cosine(a: Sequence[float], b: Sequence[float]) -> float:
    """Cosine similarity; defined as 0.0 when either vector is all-zero."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))
