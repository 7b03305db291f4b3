"""Training: example building, losses, similarity targets, and the loop.

The decoder target for a story is the body sentences joined by numbered
separator tokens:

    s1 [sep_1] s2 [sep_2] ... sm [sep_m] </s>

The hidden states at the separator positions summarize their sentences;
the similarity head scores every pair and an auxiliary loss pulls those
scores toward reference cosine similarities of sentence embeddings.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F

from .corpus import StoryRecord
from .events import EventSequence, serialize_events
from .model import ContextEventModel, load_checkpoint, save_checkpoint
from .providers import SentenceEmbedder, cosine
from .vocab import BOS, EOS, Vocab, sentence_sep, tokenize

SENT_LOSS_MODES = ("floor", "hinge")


class TrainingDiverged(RuntimeError):
    pass


class WarmStartError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    batch_size: int = 64
    lr: float = 8e-5
    adam_eps: float = 1e-8
    epochs: int = 5
    lambda_sent: float = 0.1
    delta: float = 0.1
    sent_loss_mode: str = "floor"
    seed: int = 42
    max_source_length: int = 1024
    max_target_length: int = 1024
    max_steps: Optional[int] = None
    log_every: int = 50
    shuffle: bool = True

    def validate(self) -> "TrainConfig":
        if self.sent_loss_mode not in SENT_LOSS_MODES:
            raise ValueError(f"sent_loss_mode must be one of {SENT_LOSS_MODES}")
        if self.batch_size <= 0 or self.epochs < 0 or self.lr <= 0:
            raise ValueError("batch_size and lr must be positive, epochs non-negative")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in data.items() if k in known}).validate()


# ---- vocabulary ------------------------------------------------------


def build_training_vocab(
    records: Sequence[StoryRecord],
    sequences: Sequence[EventSequence],
    size: int = 30000,
    max_sentences: int = 10,
) -> Vocab:
    """Vocabulary over leading contexts, bodies, and serialized events."""
    def streams():
        for rec in records:
            yield rec.leading_context
            for sent in rec.sentences:
                yield sent
        for seq in sequences:
            yield tokenize(serialize_events(seq.events))

    return Vocab.build(streams(), max_sentences=max_sentences, size=size)


# ---- example construction --------------------------------------------


def target_template(sentences: Sequence[Sequence[str]]) -> list[str]:
    """Body tokens with a [sep_i] after every sentence, ending in </s>."""
    out: list[str] = []
    for i, sent in enumerate(sentences, start=1):
        out.extend(sent)
        out.append(sentence_sep(i))
    out.append(EOS)
    return out


@dataclass
class TrainingExample:
    story_id: str
    context_ids: list[int]
    event_ids: list[int]
    decoder_input: list[int]
    labels: list[int]
    sep_positions: list[int]  # indices into decoder_input, one per sentence
    sim_target: Optional[np.ndarray] = None  # (m, m) float32


def build_example(
    record: StoryRecord,
    events: EventSequence,
    vocab: Vocab,
    cfg: TrainConfig,
    sim_target: Optional[np.ndarray] = None,
) -> TrainingExample:
    context_tokens = [BOS] + list(record.leading_context) + [EOS]
    event_tokens = tokenize(serialize_events(events.events))
    context_ids = vocab.encode(context_tokens)[: cfg.max_source_length]
    event_ids = vocab.encode(event_tokens)[: cfg.max_source_length]

    target_ids = vocab.encode(target_template(record.sentences))[: cfg.max_target_length]
    decoder_input = [vocab.bos_id] + target_ids[:-1]
    sep_ids = set(vocab.sep_ids())
    sep_positions = [i for i, t in enumerate(decoder_input) if t in sep_ids]

    m = len(record.sentences)
    if sim_target is not None:
        sim_target = np.asarray(sim_target, dtype=np.float32)
        if sim_target.shape != (m, m):
            raise ValueError(
                f"sim target shape {sim_target.shape} does not match {m} sentences"
            )
    # truncation can cut separators off; similarity loss needs all of them
    if len(sep_positions) != m:
        sim_target = None
    return TrainingExample(
        story_id=record.id,
        context_ids=context_ids,
        event_ids=event_ids,
        decoder_input=decoder_input,
        labels=target_ids,
        sep_positions=sep_positions,
        sim_target=sim_target,
    )


@dataclass
class Batch:
    context_ids: torch.Tensor
    event_ids: torch.Tensor
    decoder_input: torch.Tensor
    labels: torch.Tensor
    sep_positions: list[list[int]]
    sim_targets: list[Optional[np.ndarray]]
    story_ids: list[str]


def collate(examples: Sequence[TrainingExample], pad_id: int) -> Batch:
    def pad(seqs: list[list[int]]) -> torch.Tensor:
        width = max(len(s) for s in seqs)
        out = torch.full((len(seqs), width), pad_id, dtype=torch.long)
        for i, s in enumerate(seqs):
            out[i, : len(s)] = torch.tensor(s, dtype=torch.long)
        return out

    return Batch(
        context_ids=pad([e.context_ids for e in examples]),
        event_ids=pad([e.event_ids for e in examples]),
        decoder_input=pad([e.decoder_input for e in examples]),
        labels=pad([e.labels for e in examples]),
        sep_positions=[e.sep_positions for e in examples],
        sim_targets=[e.sim_target for e in examples],
        story_ids=[e.story_id for e in examples],
    )


# ---- similarity targets ----------------------------------------------


def similarity_targets(
    sentences: Sequence[Sequence[str]], embedder: SentenceEmbedder
) -> np.ndarray:
    """(m, m) matrix of cosine similarities between sentence embeddings."""
    vecs = [embedder.embed(" ".join(sent)) for sent in sentences]
    m = len(vecs)
    out = np.zeros((m, m), dtype=np.float32)
    for i in range(m):
        for j in range(m):
            out[i, j] = cosine(vecs[i], vecs[j]) if j >= i else out[j, i]
    return out


_SIM_MAGIC = b"SIMT"
_SIM_VERSION = 1


def write_similarity_cache(path, targets: dict[str, np.ndarray]) -> None:
    """Binary cache: per story id, the (m, m) float32 target matrix."""
    with open(path, "wb") as fh:
        fh.write(_SIM_MAGIC)
        fh.write(struct.pack("<IQ", _SIM_VERSION, len(targets)))
        for story_id in sorted(targets):
            matrix = np.asarray(targets[story_id], dtype=np.float32)
            if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
                raise ValueError(f"target for {story_id!r} is not square")
            raw = story_id.encode("utf-8")
            fh.write(struct.pack("<II", len(raw), matrix.shape[0]))
            fh.write(raw)
            fh.write(matrix.astype("<f4").tobytes(order="C"))


def read_similarity_cache(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _SIM_MAGIC:
            raise ValueError(f"{path}: not a similarity cache")
        version, count = struct.unpack("<IQ", fh.read(12))
        if version != _SIM_VERSION:
            raise ValueError(f"{path}: unsupported cache version {version}")
        out: dict[str, np.ndarray] = {}
        for _ in range(count):
            id_len, m = struct.unpack("<II", fh.read(8))
            story_id = fh.read(id_len).decode("utf-8")
            buf = fh.read(4 * m * m)
            out[story_id] = np.frombuffer(buf, dtype="<f4").reshape(m, m).copy()
        return out


def build_similarity_cache(
    records: Iterable[StoryRecord], embedder: SentenceEmbedder
) -> dict[str, np.ndarray]:
    return {rec.id: similarity_targets(rec.sentences, embedder) for rec in records}


# ---- losses ----------------------------------------------------------


def lm_loss(logits: torch.Tensor, labels: torch.Tensor, pad_id: int) -> torch.Tensor:
    """Mean token-level negative log likelihood, ignoring padding."""
    return F.cross_entropy(
        logits.reshape(-1, logits.size(-1)), labels.reshape(-1), ignore_index=pad_id
    )


def sent_loss(
    predicted: torch.Tensor,
    target: torch.Tensor,
    delta: float = 0.1,
    mode: str = "floor",
) -> torch.Tensor:
    """Auxiliary similarity loss over one (m, m) pair of matrices.

    floor: mean(max(|pred - target|, delta)) as written in the objective;
    the loss saturates at delta instead of reaching zero.
    hinge: mean(relu(|pred - target| - delta)), which can reach zero.
    """
    diff = torch.abs(predicted - target)
    if mode == "floor":
        per_pair = torch.clamp(diff, min=delta)
    elif mode == "hinge":
        per_pair = torch.relu(diff - delta)
    else:
        raise ValueError(f"unknown sent_loss mode {mode!r}")
    return per_pair.mean()


def batch_losses(
    model: ContextEventModel, batch: Batch, cfg: TrainConfig
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """(overall, lm, sent) for one batch; sent is 0 when unavailable."""
    output = model(
        None if model.context_encoder is None else batch.context_ids,
        None if model.event_encoder is None else batch.event_ids,
        batch.decoder_input,
    )
    lm = lm_loss(output.logits, batch.labels, model.config.pad_id)
    device = lm.device
    sent = torch.zeros((), device=device)
    if model.similarity_head is not None:
        terms = []
        for i, (positions, target) in enumerate(zip(batch.sep_positions, batch.sim_targets)):
            if target is None or not positions:
                continue
            states = output.decoder_hidden[i, positions, :]
            predicted = model.similarity_head(states)
            terms.append(
                sent_loss(
                    predicted,
                    torch.as_tensor(target, dtype=predicted.dtype, device=device),
                    delta=cfg.delta,
                    mode=cfg.sent_loss_mode,
                )
            )
        if terms:
            sent = torch.stack(terms).mean()
    overall = lm + cfg.lambda_sent * sent
    return overall, lm, sent


# ---- warm start ------------------------------------------------------


def warm_start(
    model: ContextEventModel, base_checkpoint, stage1_checkpoint
) -> ContextEventModel:
    """Initializes the dual-encoder model from two single-encoder checkpoints.

    The context encoder comes from the base model; the event encoder,
    decoder, shared embeddings, and heads come from the stage-1 model
    (a context-only model trained on concatenated context+event input).
    """
    if model.context_encoder is None or model.event_encoder is None:
        raise WarmStartError("warm start needs both encoders enabled")
    base_model, _ = load_checkpoint(base_checkpoint)
    stage1_model, _ = load_checkpoint(stage1_checkpoint)
    for source, name in ((base_model, "base"), (stage1_model, "stage1")):
        if source.context_encoder is None:
            raise WarmStartError(f"{name} checkpoint has no context encoder")
        if source.config.d_model != model.config.d_model:
            raise WarmStartError(
                f"{name} d_model {source.config.d_model} != {model.config.d_model}"
            )
        if source.config.vocab_size != model.config.vocab_size:
            raise WarmStartError(f"{name} vocabulary does not match")
    try:
        model.context_encoder.load_state_dict(base_model.context_encoder.state_dict())
        model.event_encoder.load_state_dict(stage1_model.context_encoder.state_dict())
        model.decoder.load_state_dict(stage1_model.decoder.state_dict())
        model.lm_head.load_state_dict(stage1_model.lm_head.state_dict())
        # shared table last: encoder loads above also touch it
        model.embedding.load_state_dict(stage1_model.embedding.state_dict())
        if model.similarity_head is not None and stage1_model.similarity_head is not None:
            model.similarity_head.load_state_dict(stage1_model.similarity_head.state_dict())
    except RuntimeError as exc:
        raise WarmStartError(str(exc)) from exc
    return model


# ---- the loop --------------------------------------------------------


@dataclass
class TrainResult:
    best_dev_loss: float
    best_epoch: int
    steps: int
    best_path: Optional[Path]
    last_path: Optional[Path]
    history: list[dict] = field(default_factory=list)


def evaluate_loss(
    model: ContextEventModel, examples: Sequence[TrainingExample], cfg: TrainConfig
) -> dict[str, float]:
    model.eval()
    totals = {"overall": 0.0, "lm": 0.0, "sent": 0.0}
    batches = 0
    with torch.no_grad():
        for start in range(0, len(examples), cfg.batch_size):
            batch = collate(examples[start : start + cfg.batch_size], model.config.pad_id)
            overall, lm, sent = batch_losses(model, batch, cfg)
            totals["overall"] += float(overall)
            totals["lm"] += float(lm)
            totals["sent"] += float(sent)
            batches += 1
    if batches:
        for key in totals:
            totals[key] /= batches
    return totals


def train(
    model: ContextEventModel,
    train_examples: Sequence[TrainingExample],
    dev_examples: Sequence[TrainingExample],
    cfg: TrainConfig,
    out_dir: Optional[Path] = None,
    log: Callable[[str], None] = print,
) -> TrainResult:
    cfg.validate()
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.lr, eps=cfg.adam_eps)

    best_dev = math.inf
    best_epoch = -1
    step = 0
    history: list[dict] = []
    best_path = last_path = None
    writer = None
    metrics_fh = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        best_path = out_dir / "best.pt"
        last_path = out_dir / "last.pt"
        metrics_fh = open(out_dir / "metrics.csv", "w", newline="")
        writer = csv.DictWriter(
            metrics_fh, fieldnames=["epoch", "step", "phase", "overall", "lm", "sent"]
        )
        writer.writeheader()

    def record_row(epoch: int, phase: str, overall: float, lm: float, sent: float) -> None:
        row = {
            "epoch": epoch,
            "step": step,
            "phase": phase,
            "overall": overall,
            "lm": lm,
            "sent": sent,
        }
        history.append(row)
        if writer is not None:
            writer.writerow(row)
            metrics_fh.flush()

    try:
        done = False
        for epoch in range(cfg.epochs):
            if done:
                break
            model.train()
            order = np.arange(len(train_examples))
            if cfg.shuffle:
                rng.shuffle(order)
            for start in range(0, len(order), cfg.batch_size):
                idx = order[start : start + cfg.batch_size]
                batch = collate([train_examples[i] for i in idx], model.config.pad_id)
                overall, lm, sent = batch_losses(model, batch, cfg)
                if not torch.isfinite(overall):
                    raise TrainingDiverged(
                        f"non-finite loss at epoch {epoch} step {step}"
                    )
                optimizer.zero_grad()
                overall.backward()
                optimizer.step()
                step += 1
                if step % cfg.log_every == 0 or step == 1:
                    ov, lmv, sv = (
                        float(overall.detach()),
                        float(lm.detach()),
                        float(sent.detach()),
                    )
                    record_row(epoch, "train", ov, lmv, sv)
                    log(
                        f"epoch {epoch} step {step}: loss {ov:.4f} "
                        f"(lm {lmv:.4f}, sent {sv:.4f})"
                    )
                if cfg.max_steps is not None and step >= cfg.max_steps:
                    done = True
                    break
            dev = evaluate_loss(model, dev_examples, cfg) if dev_examples else None
            if dev is not None:
                record_row(epoch, "dev", dev["overall"], dev["lm"], dev["sent"])
                log(f"epoch {epoch} dev loss {dev['overall']:.4f}")
            model.train()
            score = dev["overall"] if dev is not None else float("nan")
            if last_path is not None:
                save_checkpoint(last_path, model, {"epoch": epoch, "step": step})
            if dev is not None and score < best_dev:
                best_dev = score
                best_epoch = epoch
                if best_path is not None:
                    save_checkpoint(
                        best_path, model, {"epoch": epoch, "step": step, "dev_loss": score}
                    )
            elif dev is None and best_path is not None:
                # no dev set: the latest model is the best we know of
                best_dev = float(overall.detach()) if step else math.inf
                best_epoch = epoch
                save_checkpoint(best_path, model, {"epoch": epoch, "step": step})
    finally:
        if metrics_fh is not None:
            metrics_fh.close()
    return TrainResult(
        best_dev_loss=best_dev,
        best_epoch=best_epoch,
        steps=step,
        best_path=best_path,
        last_path=last_path,
        history=history,
    )
