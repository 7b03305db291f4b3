"""Dual-encoder seq2seq model with contextualized event fusion.

Two transformer encoders read the leading context and the serialized event
sequence. A multi-head cross-attention block queries the event features
against the context features, and the result is added back to the event
features through a residual gate:

    F_he = F_e + beta * CrossAttention(Q=F_e, K=F_c, V=F_c)

The decoder attends over the concatenation [F_c ; F_he] along the sequence
axis. A bilinear similarity head scores pairs of decoder states taken at
sentence separator positions; training uses it for an auxiliary loss.

All layers are written out explicitly (post-norm residual blocks, ReLU
feed-forward) so unit tests can mirror the math with plain numpy.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import torch
from torch import Tensor, nn

NEG_INF = -1e9  # finite mask value; keeps fully-masked rows NaN-free


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    vocab_size: int
    d_model: int = 768
    num_layers: int = 6
    num_heads: int = 12
    d_ff: int = 3072
    dropout: float = 0.1
    max_position: int = 1024
    beta: float = 0.1
    pad_id: int = 0
    disable_cm: bool = False
    disable_leading: bool = False
    disable_events: bool = False
    disable_sen: bool = False

    def validate(self) -> "ModelConfig":
        if self.vocab_size <= 0:
            raise ConfigError("vocab_size must be positive")
        if self.d_model % self.num_heads != 0:
            raise ConfigError(
                f"d_model={self.d_model} not divisible by num_heads={self.num_heads}"
            )
        if self.disable_leading and self.disable_events:
            raise ConfigError(
                "disable_leading and disable_events cannot both be set; "
                "the decoder would have no memory to attend to"
            )
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in data.items() if k in known}).validate()


class MultiHeadAttention(nn.Module):
    """Scaled dot-product attention with explicit per-head reshaping."""

    def __init__(self, d_model: int, num_heads: int, dropout: float = 0.0, bias: bool = True):
        super().__init__()
        if d_model % num_heads != 0:
            raise ConfigError("d_model must divide evenly into heads")
        self.num_heads = num_heads
        self.d_head = d_model // num_heads
        self.w_q = nn.Linear(d_model, d_model, bias=bias)
        self.w_k = nn.Linear(d_model, d_model, bias=bias)
        self.w_v = nn.Linear(d_model, d_model, bias=bias)
        self.w_o = nn.Linear(d_model, d_model, bias=bias)
        self.dropout = nn.Dropout(dropout)

    def _split(self, x: Tensor) -> Tensor:
        b, s, _ = x.shape
        return x.view(b, s, self.num_heads, self.d_head).transpose(1, 2)

    def forward(
        self,
        query: Tensor,
        key: Tensor,
        value: Tensor,
        key_padding_mask: Optional[Tensor] = None,
        attn_mask: Optional[Tensor] = None,
    ) -> tuple[Tensor, Tensor]:
        """Returns (output (B, T, D), attention weights (B, H, T, S)).

        key_padding_mask: bool (B, S), True where the key is valid.
        attn_mask: bool (T, S), True where attention is allowed.
        """
        q = self._split(self.w_q(query))
        k = self._split(self.w_k(key))
        v = self._split(self.w_v(value))
        scores = torch.matmul(q, k.transpose(-2, -1)) / math.sqrt(self.d_head)
        if attn_mask is not None:
            scores = scores.masked_fill(~attn_mask[None, None, :, :], NEG_INF)
        if key_padding_mask is not None:
            scores = scores.masked_fill(~key_padding_mask[:, None, None, :], NEG_INF)
        weights = torch.softmax(scores, dim=-1)
        out = torch.matmul(self.dropout(weights), v)
        b, _, t, _ = out.shape
        out = out.transpose(1, 2).reshape(b, t, self.num_heads * self.d_head)
        return self.w_o(out), weights


class FeedForward(nn.Module):
    def __init__(self, d_model: int, d_ff: int, dropout: float = 0.0):
        super().__init__()
        self.w_1 = nn.Linear(d_model, d_ff)
        self.w_2 = nn.Linear(d_ff, d_model)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: Tensor) -> Tensor:
        return self.w_2(self.dropout(torch.relu(self.w_1(x))))


class EncoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.self_attn = MultiHeadAttention(cfg.d_model, cfg.num_heads, cfg.dropout)
        self.ff = FeedForward(cfg.d_model, cfg.d_ff, cfg.dropout)
        self.norm_attn = nn.LayerNorm(cfg.d_model)
        self.norm_ff = nn.LayerNorm(cfg.d_model)
        self.dropout = nn.Dropout(cfg.dropout)

    def forward(self, x: Tensor, padding_mask: Optional[Tensor]) -> Tensor:
        attn_out, _ = self.self_attn(x, x, x, key_padding_mask=padding_mask)
        x = self.norm_attn(x + self.dropout(attn_out))
        x = self.norm_ff(x + self.dropout(self.ff(x)))
        return x


class DecoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.self_attn = MultiHeadAttention(cfg.d_model, cfg.num_heads, cfg.dropout)
        self.cross_attn = MultiHeadAttention(cfg.d_model, cfg.num_heads, cfg.dropout)
        self.ff = FeedForward(cfg.d_model, cfg.d_ff, cfg.dropout)
        self.norm_self = nn.LayerNorm(cfg.d_model)
        self.norm_cross = nn.LayerNorm(cfg.d_model)
        self.norm_ff = nn.LayerNorm(cfg.d_model)
        self.dropout = nn.Dropout(cfg.dropout)

    def forward(
        self,
        x: Tensor,
        memory: Tensor,
        causal_mask: Tensor,
        memory_padding_mask: Optional[Tensor],
        self_padding_mask: Optional[Tensor],
    ) -> Tensor:
        attn_out, _ = self.self_attn(
            x, x, x, key_padding_mask=self_padding_mask, attn_mask=causal_mask
        )
        x = self.norm_self(x + self.dropout(attn_out))
        cross_out, _ = self.cross_attn(
            x, memory, memory, key_padding_mask=memory_padding_mask
        )
        x = self.norm_cross(x + self.dropout(cross_out))
        x = self.norm_ff(x + self.dropout(self.ff(x)))
        return x


class TransformerEncoder(nn.Module):
    """Embeds a token sequence (shared table + learned positions) and encodes it."""

    def __init__(self, cfg: ModelConfig, token_embedding: nn.Embedding):
        super().__init__()
        self.token_embedding = token_embedding
        self.position_embedding = nn.Embedding(cfg.max_position, cfg.d_model)
        self.layers = nn.ModuleList(EncoderLayer(cfg) for _ in range(cfg.num_layers))
        self.dropout = nn.Dropout(cfg.dropout)
        self.max_position = cfg.max_position

    def forward(self, ids: Tensor, padding_mask: Optional[Tensor]) -> Tensor:
        if ids.size(1) > self.max_position:
            raise ConfigError(
                f"sequence length {ids.size(1)} exceeds max_position {self.max_position}"
            )
        positions = torch.arange(ids.size(1), device=ids.device)
        x = self.token_embedding(ids) + self.position_embedding(positions)[None, :, :]
        x = self.dropout(x)
        for layer in self.layers:
            x = layer(x, padding_mask)
        return x


class TransformerDecoder(nn.Module):
    def __init__(self, cfg: ModelConfig, token_embedding: nn.Embedding):
        super().__init__()
        self.token_embedding = token_embedding
        self.position_embedding = nn.Embedding(cfg.max_position, cfg.d_model)
        self.layers = nn.ModuleList(DecoderLayer(cfg) for _ in range(cfg.num_layers))
        self.dropout = nn.Dropout(cfg.dropout)
        self.max_position = cfg.max_position

    def forward(
        self,
        ids: Tensor,
        memory: Tensor,
        memory_padding_mask: Optional[Tensor],
        self_padding_mask: Optional[Tensor],
    ) -> Tensor:
        if ids.size(1) > self.max_position:
            raise ConfigError(
                f"sequence length {ids.size(1)} exceeds max_position {self.max_position}"
            )
        t = ids.size(1)
        positions = torch.arange(t, device=ids.device)
        x = self.token_embedding(ids) + self.position_embedding(positions)[None, :, :]
        x = self.dropout(x)
        causal = torch.tril(torch.ones(t, t, dtype=torch.bool, device=ids.device))
        for layer in self.layers:
            x = layer(x, memory, causal, memory_padding_mask, self_padding_mask)
        return x


class CrossAttentionFuser(nn.Module):
    """Multi-head cross attention from event features onto context features.

    Projections carry no bias, matching the plain linear maps of the fusion
    equations; the per-head outputs are concatenated and mixed by one final
    linear map.
    """

    def __init__(self, d_model: int, num_heads: int):
        super().__init__()
        self.attn = MultiHeadAttention(d_model, num_heads, dropout=0.0, bias=False)

    def forward(
        self,
        event_features: Tensor,
        context_features: Tensor,
        context_padding_mask: Optional[Tensor] = None,
    ) -> tuple[Tensor, Tensor]:
        return self.attn(
            event_features,
            context_features,
            context_features,
            key_padding_mask=context_padding_mask,
        )


class SimilarityHead(nn.Module):
    """Bilinear, symmetrized similarity between two decoder states.

    score(i, j) = sigmoid(h_i^T W h_j + h_j^T W h_i), so the matrix is
    symmetric by construction regardless of W.
    """

    def __init__(self, d_model: int):
        super().__init__()
        self.w_sep = nn.Linear(d_model, d_model, bias=False)

    def forward(self, states: Tensor) -> Tensor:
        """states: (m, D) or (B, m, D) -> (m, m) or (B, m, m) in (0, 1)."""
        u = torch.matmul(self.w_sep(states), states.transpose(-2, -1))
        return torch.sigmoid(u + u.transpose(-2, -1))


@dataclass
class ModelOutput:
    logits: Tensor
    decoder_hidden: Tensor
    memory: Tensor
    memory_mask: Optional[Tensor]
    context_features: Optional[Tensor] = None
    event_features: Optional[Tensor] = None
    fused_event_features: Optional[Tensor] = None
    fusion_weights: Optional[Tensor] = None


class ContextEventModel(nn.Module):
    """The full generator; ablation flags drop modules at construction."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        config.validate()
        self.config = config
        self.embedding = nn.Embedding(config.vocab_size, config.d_model, padding_idx=config.pad_id)
        self.context_encoder = (
            None if config.disable_leading else TransformerEncoder(config, self.embedding)
        )
        self.event_encoder = (
            None if config.disable_events else TransformerEncoder(config, self.embedding)
        )
        use_fuser = not (config.disable_cm or config.disable_leading or config.disable_events)
        self.fuser = CrossAttentionFuser(config.d_model, config.num_heads) if use_fuser else None
        self.decoder = TransformerDecoder(config, self.embedding)
        self.lm_head = nn.Linear(config.d_model, config.vocab_size, bias=False)
        self.similarity_head = None if config.disable_sen else SimilarityHead(config.d_model)

    def padding_mask(self, ids: Tensor) -> Tensor:
        return ids != self.config.pad_id

    def encode(
        self, context_ids: Optional[Tensor], event_ids: Optional[Tensor]
    ) -> tuple[Tensor, Tensor, dict]:
        """Builds the decoder memory [F_c ; F_he] and its padding mask."""
        cfg = self.config
        details: dict = {}
        f_c = c_mask = None
        if self.context_encoder is not None:
            if context_ids is None:
                raise ConfigError("model expects leading-context input")
            c_mask = self.padding_mask(context_ids)
            f_c = self.context_encoder(context_ids, c_mask)
            details["context_features"] = f_c
        f_e = e_mask = None
        if self.event_encoder is not None:
            if event_ids is None:
                raise ConfigError("model expects event-sequence input")
            e_mask = self.padding_mask(event_ids)
            f_e = self.event_encoder(event_ids, e_mask)
            details["event_features"] = f_e

        if f_c is not None and f_e is not None:
            if self.fuser is not None:
                attended, weights = self.fuser(f_e, f_c, c_mask)
                f_he = f_e + cfg.beta * attended
                details["fused_event_features"] = f_he
                details["fusion_weights"] = weights
            else:
                f_he = f_e
            memory = torch.cat([f_c, f_he], dim=1)
            memory_mask = torch.cat([c_mask, e_mask], dim=1)
        elif f_c is not None:
            memory, memory_mask = f_c, c_mask
        else:
            memory, memory_mask = f_e, e_mask
        return memory, memory_mask, details

    def forward(
        self,
        context_ids: Optional[Tensor],
        event_ids: Optional[Tensor],
        decoder_input_ids: Tensor,
    ) -> ModelOutput:
        memory, memory_mask, details = self.encode(context_ids, event_ids)
        hidden = self.decoder(
            decoder_input_ids,
            memory,
            memory_padding_mask=memory_mask,
            self_padding_mask=self.padding_mask(decoder_input_ids),
        )
        logits = self.lm_head(hidden)
        return ModelOutput(
            logits=logits,
            decoder_hidden=hidden,
            memory=memory,
            memory_mask=memory_mask,
            context_features=details.get("context_features"),
            event_features=details.get("event_features"),
            fused_event_features=details.get("fused_event_features"),
            fusion_weights=details.get("fusion_weights"),
        )

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())


def save_checkpoint(path, model: ContextEventModel, extra: Optional[dict] = None) -> None:
    torch.save(
        {
            "config": model.config.to_dict(),
            "state_dict": model.state_dict(),
            "extra": extra or {},
        },
        path,
    )


def load_checkpoint(path) -> tuple[ContextEventModel, dict]:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    config = ModelConfig.from_dict(payload["config"])
    model = ContextEventModel(config)
    model.load_state_dict(payload["state_dict"])
    return model, payload.get("extra", {})
