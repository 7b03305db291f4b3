"""Shared tokenizer and vocabulary.

Every component that counts n-grams or feeds the model goes through the
same tokenizer, so changing it changes all of them together.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

PAD = "<pad>"
BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"
EVENT_START = "<e_s>"
EVENT_SEP = "<e_sep>"
EVENT_END = "<e_e>"
EVENT_NONE = "<e_none>"
MALE = "[MALE]"
FEMALE = "[FEMALE]"
NEUTRAL = "[NEUTRAL]"

NAME_PLACEHOLDERS = (MALE, FEMALE, NEUTRAL)


def sentence_sep(i: int) -> str:
    """Separator token emitted after the i-th generated sentence (1-based)."""
    return f"[sep_{i}]"


SEP_RE = re.compile(r"\[sep_(\d+)\]")

# Contractions are split Penn-style before the main pass so that "didn't"
# becomes "did n't" and the negation survives as its own token.
_CONTRACTION_RE = re.compile(r"(\w)(n't|'s|'re|'ve|'ll|'d|'m)\b")

_TOKEN_RE = re.compile(
    r"\[[A-Za-z_0-9]+\]"  # bracketed specials: [MALE], [sep_3], ...
    r"|</?[a-z_0-9]+>"  # angled specials: <s>, </s>, <e_sep>, ...
    r"|n't|'s|'re|'ve|'ll|'d|'m"
    r"|[A-Za-z0-9]+"
    r"|[^\sA-Za-z0-9]"  # any other single character (punctuation)
)


def tokenize(text: str, lowercase: bool = False) -> list[str]:
    """Split text into tokens, keeping punctuation and special tokens whole."""
    if lowercase:
        text = text.lower()
    text = _CONTRACTION_RE.sub(r"\1 \2", text)
    return _TOKEN_RE.findall(text)


def detokenize(tokens: Sequence[str]) -> str:
    return " ".join(tokens)


def base_special_tokens(max_sentences: int = 10) -> list[str]:
    """Fixed special-token inventory; order defines the low vocab ids."""
    specials = [PAD, BOS, EOS, UNK, EVENT_START, EVENT_SEP, EVENT_END, EVENT_NONE]
    specials.extend(sentence_sep(i) for i in range(1, max_sentences + 1))
    specials.extend(NAME_PLACEHOLDERS)
    return specials


@dataclass
class Vocab:
    """Token <-> id mapping with a fixed special-token prefix."""

    tokens: list[str]
    max_sentences: int = 10
    _index: dict[str, int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._index = {tok: i for i, tok in enumerate(self.tokens)}
        for tok in base_special_tokens(self.max_sentences):
            if tok not in self._index:
                raise ValueError(f"vocabulary is missing special token {tok!r}")

    @classmethod
    def build(
        cls,
        token_streams: Iterable[Sequence[str]],
        max_sentences: int = 10,
        size: int | None = None,
    ) -> "Vocab":
        counts = Counter()
        for stream in token_streams:
            counts.update(stream)
        specials = base_special_tokens(max_sentences)
        special_set = set(specials)
        # Most-frequent-first with lexical tiebreak keeps the build deterministic.
        ordinary = sorted(
            (t for t in counts if t not in special_set),
            key=lambda t: (-counts[t], t),
        )
        if size is not None:
            if size < len(specials):
                raise ValueError(
                    f"size={size} cannot hold the {len(specials)} special tokens"
                )
            ordinary = ordinary[: size - len(specials)]
        return cls(tokens=specials + ordinary, max_sentences=max_sentences)

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    @property
    def pad_id(self) -> int:
        return self._index[PAD]

    @property
    def bos_id(self) -> int:
        return self._index[BOS]

    @property
    def eos_id(self) -> int:
        return self._index[EOS]

    @property
    def unk_id(self) -> int:
        return self._index[UNK]

    def sep_ids(self) -> list[int]:
        return [self._index[sentence_sep(i)] for i in range(1, self.max_sentences + 1)]

    def encode(self, tokens: Sequence[str]) -> list[int]:
        unk = self.unk_id
        return [self._index.get(t, unk) for t in tokens]

    def decode(self, ids: Sequence[int]) -> list[str]:
        return [self.tokens[i] for i in ids]

    def id_of(self, token: str) -> int:
        return self._index[token]

    def to_dict(self) -> dict:
        return {"tokens": list(self.tokens), "max_sentences": self.max_sentences}

    @classmethod
    def from_dict(cls, d: dict) -> "Vocab":
        return cls(tokens=list(d["tokens"]), max_sentences=int(d["max_sentences"]))
