"""Shared transformer building blocks: relative position bias, attention, layers.

Both the context encoder and the transformation decoder use pre-norm
transformer layers whose attention scores carry a bucketed relative-position
bias (a learned scalar per head per distance bucket) instead of absolute
position embeddings.
"""

from __future__ import annotations

import math

import torch
from torch import Tensor, nn


def relative_position_bucket(
    relative_position: Tensor, causal: bool, n_buckets: int, max_distance: int
) -> Tensor:
    """Bucket signed relative distances (key_pos - query_pos).

    Nearby distances get exact buckets, larger ones share logarithmically
    spaced buckets up to max_distance; bidirectional mode spends half the
    buckets on each sign.
    """
    ret = torch.zeros_like(relative_position)
    if causal:
        n = -torch.clamp(relative_position, max=0)
    else:
        n_buckets //= 2
        ret = ret + (relative_position > 0).long() * n_buckets
        n = relative_position.abs()
    max_exact = n_buckets // 2
    is_small = n < max_exact
    large = max_exact + (
        torch.log(n.float().clamp(min=1) / max_exact)
        / math.log(max_distance / max_exact)
        * (n_buckets - max_exact)
    ).long()
    large = torch.clamp(large, max=n_buckets - 1)
    return ret + torch.where(is_small, n, large)


class RelativePositionBias(nn.Module):
    """Learned additive attention bias indexed by relative-distance bucket."""

    def __init__(self, n_heads: int, n_buckets: int = 32, max_distance: int = 128, causal: bool = False):
        super().__init__()
        self.n_buckets = n_buckets
        self.max_distance = max_distance
        self.causal = causal
        self.bias = nn.Embedding(n_buckets, n_heads)

    def forward(self, q_len: int, k_len: int, device: torch.device) -> Tensor:
        q_pos = torch.arange(q_len, dtype=torch.long, device=device)
        k_pos = torch.arange(k_len, dtype=torch.long, device=device)
        rel = k_pos[None, :] - q_pos[:, None]
        buckets = relative_position_bucket(rel, self.causal, self.n_buckets, self.max_distance)
        # (q, k, heads) -> (1, heads, q, k)
        return self.bias(buckets).permute(2, 0, 1).unsqueeze(0)


class MultiHeadAttention(nn.Module):
    def __init__(self, d_model: int, n_heads: int, dropout: float = 0.0):
        super().__init__()
        if d_model % n_heads != 0:
            raise ValueError(f"d_model {d_model} not divisible by n_heads {n_heads}")
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.q_proj = nn.Linear(d_model, d_model)
        self.k_proj = nn.Linear(d_model, d_model)
        self.v_proj = nn.Linear(d_model, d_model)
        self.o_proj = nn.Linear(d_model, d_model)
        self.dropout = nn.Dropout(dropout)

    def forward(
        self,
        x: Tensor,
        pos_bias: Tensor | None = None,
        key_mask: Tensor | None = None,
        causal: bool = False,
    ) -> Tensor:
        """Self-attention over x (B, L, d).

        key_mask: (B, L) bool, True = position may be attended to.
        pos_bias: (1, heads, L, L) additive score bias.
        """
        b, length, _ = x.shape
        q = self.q_proj(x).view(b, length, self.n_heads, self.d_head).transpose(1, 2)
        k = self.k_proj(x).view(b, length, self.n_heads, self.d_head).transpose(1, 2)
        v = self.v_proj(x).view(b, length, self.n_heads, self.d_head).transpose(1, 2)

        scores = q @ k.transpose(-2, -1) / math.sqrt(self.d_head)
        if pos_bias is not None:
            scores = scores + pos_bias
        neg = torch.finfo(scores.dtype).min
        if causal:
            future = torch.triu(
                torch.ones(length, length, dtype=torch.bool, device=x.device), diagonal=1
            )
            scores = scores.masked_fill(future, neg)
        if key_mask is not None:
            scores = scores.masked_fill(~key_mask[:, None, None, :], neg)
        attn = torch.softmax(scores, dim=-1)
        attn = self.dropout(attn)
        out = (attn @ v).transpose(1, 2).reshape(b, length, -1)
        return self.o_proj(out)


class TransformerLayer(nn.Module):
    """Pre-norm block: attention then a GELU feed-forward, both residual."""

    def __init__(self, d_model: int, n_heads: int, ffn_width: int, dropout: float = 0.0):
        super().__init__()
        self.ln_attn = nn.LayerNorm(d_model)
        self.attn = MultiHeadAttention(d_model, n_heads, dropout)
        self.ln_ffn = nn.LayerNorm(d_model)
        self.ffn = nn.Sequential(
            nn.Linear(d_model, ffn_width),
            nn.GELU(),
            nn.Dropout(dropout),
            nn.Linear(ffn_width, d_model),
        )
        self.dropout = nn.Dropout(dropout)

    def forward(
        self,
        x: Tensor,
        pos_bias: Tensor | None = None,
        key_mask: Tensor | None = None,
        causal: bool = False,
    ) -> Tensor:
        x = x + self.dropout(self.attn(self.ln_attn(x), pos_bias, key_mask, causal))
        x = x + self.dropout(self.ffn(self.ln_ffn(x)))
        return x
