"""Generation: nucleus sampling over the trained generator.

Sampling uses one numpy RNG stream per example, seeded by (seed, example
index), so results do not depend on batch size or visit order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import torch

from .corpus import StoryRecord
from .events import EventSequence, serialize_events
from .model import ContextEventModel
from .providers import SentenceSplitter
from .training import TrainingExample
from .vocab import BOS, EOS, SEP_RE, Vocab, detokenize, tokenize


@dataclass
class GenerationConfig:
    top_p: float = 0.9
    max_length: int = 256
    batch_size: int = 15
    seed: int = 42
    greedy: bool = False

    def validate(self) -> "GenerationConfig":
        if not (0.0 < self.top_p <= 1.0):
            raise ValueError("top_p must be in (0, 1]")
        if self.max_length <= 0 or self.batch_size <= 0:
            raise ValueError("max_length and batch_size must be positive")
        return self


def nucleus_sample(probs: np.ndarray, top_p: float, rng: np.random.Generator) -> int:
    """Samples from the smallest probability mass prefix reaching top_p.

    Tokens are ranked by descending probability (stable order on ties);
    the prefix is renormalized before sampling. top_p near 0 reduces to
    argmax, top_p = 1 to plain sampling.
    """
    probs = np.asarray(probs, dtype=np.float64)
    order = np.argsort(-probs, kind="stable")
    cum = np.cumsum(probs[order])
    k = int(np.searchsorted(cum, top_p) + 1)
    k = min(k, len(order))
    kept = order[:k]
    kept_p = probs[kept]
    kept_p = kept_p / kept_p.sum()
    return int(kept[rng.choice(len(kept), p=kept_p)])


@dataclass
class Prompt:
    story_id: str
    context_ids: list[int]
    event_ids: list[int]


def build_prompt(
    record: StoryRecord,
    events: EventSequence,
    vocab: Vocab,
    max_source_length: int = 1024,
) -> Prompt:
    context_tokens = [BOS] + list(record.leading_context) + [EOS]
    event_tokens = tokenize(serialize_events(events.events))
    return Prompt(
        story_id=record.id,
        context_ids=vocab.encode(context_tokens)[:max_source_length],
        event_ids=vocab.encode(event_tokens)[:max_source_length],
    )


def prompt_from_example(example: TrainingExample) -> Prompt:
    return Prompt(
        story_id=example.story_id,
        context_ids=list(example.context_ids),
        event_ids=list(example.event_ids),
    )


@dataclass
class GeneratedStory:
    story_id: str
    token_ids: list[int]
    tokens: list[str]
    sentences: list[list[str]] = field(default_factory=list)
    text: str = ""

    def to_dict(self) -> dict:
        return {
            "id": self.story_id,
            "text": self.text,
            "sentences": self.sentences,
            "tokens": self.tokens,
        }


def split_generated(
    tokens: Sequence[str], splitter: Optional[SentenceSplitter] = None
) -> list[list[str]]:
    """Sentence token lists, split at [sep_i] markers.

    Falls back to the sentence splitter over the flat text when the model
    emitted no markers at all.
    """
    sentences: list[list[str]] = []
    current: list[str] = []
    saw_sep = False
    for tok in tokens:
        if SEP_RE.fullmatch(tok):
            saw_sep = True
            if current:
                sentences.append(current)
                current = []
        else:
            current.append(tok)
    if current:
        sentences.append(current)
    if not saw_sep and splitter is not None and sentences:
        flat = detokenize([t for s in sentences for t in s])
        resplit = [tokenize(s) for s in splitter.split(flat)]
        return [s for s in resplit if s]
    return sentences


def generate(
    model: ContextEventModel,
    vocab: Vocab,
    prompts: Sequence[Prompt],
    cfg: GenerationConfig,
    splitter: Optional[SentenceSplitter] = None,
) -> list[GeneratedStory]:
    cfg.validate()
    model.eval()
    results: list[GeneratedStory] = []
    for start in range(0, len(prompts), cfg.batch_size):
        chunk = prompts[start : start + cfg.batch_size]
        rngs = [np.random.default_rng((cfg.seed, start + i)) for i in range(len(chunk))]
        results.extend(_generate_batch(model, vocab, chunk, cfg, rngs, splitter))
    return results


def _pad_batch(seqs: list[list[int]], pad_id: int) -> torch.Tensor:
    width = max(len(s) for s in seqs)
    out = torch.full((len(seqs), width), pad_id, dtype=torch.long)
    for i, s in enumerate(seqs):
        out[i, : len(s)] = torch.tensor(s, dtype=torch.long)
    return out


def _generate_batch(
    model: ContextEventModel,
    vocab: Vocab,
    prompts: Sequence[Prompt],
    cfg: GenerationConfig,
    rngs: list[np.random.Generator],
    splitter: Optional[SentenceSplitter],
) -> list[GeneratedStory]:
    pad_id = model.config.pad_id
    n = len(prompts)
    with torch.no_grad():
        context = _pad_batch([p.context_ids for p in prompts], pad_id)
        events = _pad_batch([p.event_ids for p in prompts], pad_id)
        memory, memory_mask, _ = model.encode(
            None if model.context_encoder is None else context,
            None if model.event_encoder is None else events,
        )
        sequences: list[list[int]] = [[vocab.bos_id] for _ in range(n)]
        finished = [False] * n
        for _ in range(cfg.max_length):
            dec = _pad_batch(sequences, pad_id)
            hidden = model.decoder(
                dec, memory, memory_padding_mask=memory_mask,
                self_padding_mask=(dec != pad_id),
            )
            for i in range(n):
                if finished[i]:
                    continue
                logits = model.lm_head(hidden[i, len(sequences[i]) - 1, :])
                probs = torch.softmax(logits, dim=-1).cpu().numpy()
                if cfg.greedy:
                    nxt = int(np.argmax(probs))
                else:
                    nxt = nucleus_sample(probs, cfg.top_p, rngs[i])
                sequences[i].append(nxt)
                if nxt == vocab.eos_id:
                    finished[i] = True
            if all(finished):
                break
    out = []
    drop = {vocab.pad_id, vocab.bos_id, vocab.eos_id}
    for prompt, seq in zip(prompts, sequences):
        kept_ids = [t for t in seq if t not in drop]
        tokens = vocab.decode(kept_ids)
        sentences = split_generated(tokens, splitter)
        text = " ".join(detokenize(s) for s in sentences)
        out.append(
            GeneratedStory(
                story_id=prompt.story_id,
                token_ids=kept_ids,
                tokens=tokens,
                sentences=sentences,
                text=text,
            )
        )
    return out
