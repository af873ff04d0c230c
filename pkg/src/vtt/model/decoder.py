"""Shared transformation decoder: teacher-forced loss and top-k/top-p sampling.

The transformation representation is injected by adding it to the word
embedding at every position; there is no cross-attention and no prefix token.
One decoder is shared across all transformations of a sample.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import torch
from torch import Tensor, nn

from ..text import BOS, EOS, PAD, Vocabulary
from .layers import RelativePositionBias, TransformerLayer


@dataclass(frozen=True)
class SamplingConfig:
    top_k: int = 100
    top_p: float = 0.9
    max_len: int = 16
    temperature: float = 1.0
    seed: int = 0

    def validate(self) -> None:
        if self.top_k < 1:
            raise ValueError(f"top_k must be >= 1, got {self.top_k}")
        if not 0.0 < self.top_p <= 1.0:
            raise ValueError(f"top_p must be in (0, 1], got {self.top_p}")
        if self.max_len < 1:
            raise ValueError(f"max_len must be >= 1, got {self.max_len}")
        if self.temperature <= 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")

    def greedy(self) -> "SamplingConfig":
        """Argmax decoding: top-1 restriction makes sampling deterministic."""
        return replace(self, top_k=1, top_p=1.0)


@dataclass
class GenerationResult:
    """Generated descriptions for one sample, with per-token log-probs under
    the full (unfiltered) softmax distribution."""

    sample_id: str
    descriptions: list[str]
    token_ids: list[list[int]]
    log_probs: list[list[float]]


class TextDecoder(nn.Module):
    def __init__(
        self,
        vocab_size: int,
        d_model: int,
        n_heads: int,
        n_layers: int,
        ffn_width: int,
        rel_buckets: int = 32,
        rel_max_distance: int = 128,
        dropout: float = 0.0,
        tie_embeddings: bool = False,
    ):
        super().__init__()
        self.token_emb = nn.Embedding(vocab_size, d_model)
        self.pos_bias = RelativePositionBias(n_heads, rel_buckets, rel_max_distance, causal=True)
        self.layers = nn.ModuleList(
            TransformerLayer(d_model, n_heads, ffn_width, dropout) for _ in range(n_layers)
        )
        self.ln_out = nn.LayerNorm(d_model)
        self.tie_embeddings = tie_embeddings
        if tie_embeddings:
            self.out_proj = None
        else:
            self.out_proj = nn.Linear(d_model, vocab_size)
        nn.init.normal_(self.token_emb.weight, std=0.02)

    @property
    def vocab_size(self) -> int:
        return self.token_emb.num_embeddings

    def forward(self, reps: Tensor, input_ids: Tensor) -> Tensor:
        """Teacher-forced logits.

        reps: (T, d_model), one representation per transformation.
        input_ids: (T, L) BOS-prefixed token ids, PAD-suffixed.
        Returns logits (T, L, vocab).
        """
        if input_ids.shape[0] != reps.shape[0]:
            raise ValueError(
                f"{reps.shape[0]} representations for {input_ids.shape[0]} sequences"
            )
        if input_ids.max() >= self.vocab_size or input_ids.min() < 0:
            raise ValueError("token id out of vocabulary range")
        x = self.token_emb(input_ids) + reps.unsqueeze(1)
        bias = self.pos_bias(input_ids.shape[1], input_ids.shape[1], input_ids.device)
        for layer in self.layers:
            x = layer(x, pos_bias=bias, causal=True)
        h = self.ln_out(x)
        if self.out_proj is not None:
            return self.out_proj(h)
        return h @ self.token_emb.weight.t()

    def decode_step(self, rep: Tensor, prefix_ids: list[int] | Tensor) -> Tensor:
        """Next-token logits after a BOS-prefixed prefix, shape (vocab,)."""
        ids = torch.as_tensor(prefix_ids, dtype=torch.long, device=rep.device)
        if ids.numel() == 0 or ids[0].item() != BOS:
            raise ValueError("prefix must begin with BOS")
        logits = self.forward(rep.unsqueeze(0), ids.unsqueeze(0))
        return logits[0, -1]


def nll_loss(logits: Tensor, target_ids: Tensor, reduction: str = "mean") -> Tensor:
    """Negative log-likelihood of gold tokens, PAD positions excluded.

    reduction="mean" averages over non-PAD tokens; "sum" matches the raw
    summed objective.
    """
    if reduction not in ("mean", "sum"):
        raise ValueError(f"unknown reduction {reduction!r}")
    if logits.shape[:-1] != target_ids.shape:
        raise ValueError(
            f"logits shape {tuple(logits.shape)} does not match targets {tuple(target_ids.shape)}"
        )
    return nn.functional.cross_entropy(
        logits.reshape(-1, logits.shape[-1]),
        target_ids.reshape(-1),
        ignore_index=PAD,
        reduction=reduction,
    )


def top_k_top_p_filter(probs: Tensor, top_k: int, top_p: float) -> Tensor:
    """Renormalized distribution restricted to the top-k / nucleus support.

    Keeps the k highest-probability tokens, then the smallest prefix of them
    whose cumulative probability reaches top_p, and renormalizes. Returns a
    full-size vector with zeros off-support.
    """
    if top_k < 1:
        raise ValueError(f"top_k must be >= 1, got {top_k}")
    if not 0.0 < top_p <= 1.0:
        raise ValueError(f"top_p must be in (0, 1], got {top_p}")
    sorted_probs, sorted_idx = torch.sort(probs, descending=True, stable=True)
    k = min(top_k, probs.shape[-1])
    sorted_probs = sorted_probs[:k]
    cumulative = torch.cumsum(sorted_probs, dim=-1)
    # First index where the cumulative mass reaches top_p closes the nucleus.
    reached = cumulative >= top_p - 1e-12
    cut = int(reached.nonzero()[0].item()) + 1 if bool(reached.any()) else k
    kept = sorted_probs[:cut]
    filtered = torch.zeros_like(probs)
    filtered[sorted_idx[:cut]] = kept / kept.sum()
    return filtered


def sample_token(probs: Tensor, generator: torch.Generator) -> int:
    return int(torch.multinomial(probs, 1, generator=generator).item())


def sample_description(
    rep: Tensor,
    decoder: TextDecoder,
    cfg: SamplingConfig,
    generator: torch.Generator,
) -> tuple[list[int], list[float]]:
    """Autoregressively sample one description.

    PAD and BOS are removed from the candidate set before top-k/top-p
    filtering (they are never legal outputs). Returns generated token ids
    (EOS included when produced within max_len) and the log-probability of
    each generated token under the full softmax, so exp(sum) reproduces the
    sequence probability the NLL loss sees.
    """
    cfg.validate()
    prefix = [BOS]
    token_ids: list[int] = []
    log_probs: list[float] = []
    for _ in range(cfg.max_len):
        logits = decoder.decode_step(rep, prefix)
        if cfg.temperature != 1.0:
            logits = logits / cfg.temperature
        full_log_probs = torch.log_softmax(logits, dim=-1)
        probs = full_log_probs.exp()
        probs[PAD] = 0.0
        probs[BOS] = 0.0
        filtered = top_k_top_p_filter(probs / probs.sum(), cfg.top_k, cfg.top_p)
        token = sample_token(filtered, generator)
        token_ids.append(token)
        log_probs.append(float(full_log_probs[token].item()))
        prefix.append(token)
        if token == EOS:
            break
    return token_ids, log_probs


def generate_sample(
    sample_id: str,
    transformation_reps: Tensor,
    decoder: TextDecoder,
    vocab: Vocabulary,
    cfg: SamplingConfig,
    generator: torch.Generator,
) -> GenerationResult:
    """Decode every transformation representation of one sample independently."""
    if transformation_reps.shape[0] < 1:
        raise ValueError("need at least one transformation representation")
    descriptions, all_ids, all_lps = [], [], []
    for i in range(transformation_reps.shape[0]):
        ids, lps = sample_description(transformation_reps[i], decoder, cfg, generator)
        descriptions.append(" ".join(vocab.decode(ids)))
        all_ids.append(ids)
        all_lps.append(lps)
    return GenerationResult(
        sample_id=sample_id, descriptions=descriptions, token_ids=all_ids, log_probs=all_lps
    )
