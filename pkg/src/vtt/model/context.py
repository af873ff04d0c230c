"""Context encoder: contextualize state/difference rows into transformation reps.

A learned GLOBAL token is prepended to every row sequence; its output feeds
the category and topic classification heads. The representation for
transformation i is read from the encoder output at the difference row of
(state i+1 minus state i) when difference rows are present, else at the state
row of state i+1. Masked transformation modeling zeroes random input rows
during training only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from torch import Tensor, nn

from ..encoding import EncoderInput
from .layers import RelativePositionBias, TransformerLayer

REP_SOURCES = ("diff", "state", "sum")


@dataclass
class MTMPolicy:
    """Row-masking policy: a sample accepts masking with probability
    sample_ratio, and then each row is masked independently with probability
    mask_ratio."""

    mask_ratio: float = 0.15
    sample_ratio: float = 0.5
    seed: int = 0
    rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if not 0.0 <= self.mask_ratio <= 1.0:
            raise ValueError(f"mask_ratio must be in [0, 1], got {self.mask_ratio}")
        if not 0.0 <= self.sample_ratio <= 1.0:
            raise ValueError(f"sample_ratio must be in [0, 1], got {self.sample_ratio}")
        self.rng = np.random.default_rng(self.seed)


def sample_mask_plan(policy: MTMPolicy, n_rows: int, training: bool) -> torch.Tensor:
    """Boolean mask plan for one sample's encoder rows; all False at inference."""
    if n_rows < 2:
        raise ValueError(f"n_rows must be >= 2, got {n_rows}")
    plan = torch.zeros(n_rows, dtype=torch.bool)
    if not training:
        return plan
    if policy.rng.random() >= policy.sample_ratio:
        return plan
    draws = policy.rng.random(n_rows) < policy.mask_ratio
    return torch.from_numpy(draws)


@dataclass
class ContextOutput:
    """Per-sample encoder outputs."""

    transformation_reps: Tensor
    global_rep: Tensor
    category_logits: Tensor | None
    topic_logits: Tensor | None


class ContextBatch:
    """Batched encoder outputs plus the bookkeeping to slice per sample."""

    def __init__(
        self,
        reps: Tensor,
        n_transformations: list[int],
        global_reps: Tensor,
        category_logits: Tensor | None,
        topic_logits: Tensor | None,
    ):
        self.reps = reps  # (B, N_max, d), rows past n_transformations[b] are padding
        self.n_transformations = n_transformations
        self.global_reps = global_reps
        self.category_logits = category_logits
        self.topic_logits = topic_logits

    def __len__(self) -> int:
        return len(self.n_transformations)

    def flat_reps(self) -> Tensor:
        """All transformation reps concatenated sample-major, (sum N_i, d)."""
        return torch.cat([self.reps[b, : n] for b, n in enumerate(self.n_transformations)])

    def output_for(self, b: int) -> ContextOutput:
        return ContextOutput(
            transformation_reps=self.reps[b, : self.n_transformations[b]],
            global_rep=self.global_reps[b],
            category_logits=None if self.category_logits is None else self.category_logits[b],
            topic_logits=None if self.topic_logits is None else self.topic_logits[b],
        )


class ContextEncoder(nn.Module):
    def __init__(
        self,
        d_model: int,
        n_heads: int,
        n_layers: int,
        ffn_width: int,
        n_categories: int | None,
        n_topics: int | None,
        rel_buckets: int = 32,
        rel_max_distance: int = 128,
        dropout: float = 0.0,
        rep_source: str = "diff",
    ):
        super().__init__()
        if rep_source not in REP_SOURCES:
            raise ValueError(f"rep_source must be one of {REP_SOURCES}, got {rep_source!r}")
        self.rep_source = rep_source
        self.global_token = nn.Parameter(torch.zeros(d_model))
        self.pos_bias = RelativePositionBias(n_heads, rel_buckets, rel_max_distance, causal=False)
        self.layers = nn.ModuleList(
            TransformerLayer(d_model, n_heads, ffn_width, dropout) for _ in range(n_layers)
        )
        self.ln_out = nn.LayerNorm(d_model)
        self.category_head = (
            nn.Linear(d_model, n_categories) if n_categories is not None else None
        )
        self.topic_head = nn.Linear(d_model, n_topics) if n_topics is not None else None
        nn.init.normal_(self.global_token, std=0.02)

    def _rep_rows(self, inp: EncoderInput) -> list[tuple[int, ...]]:
        """Output row indices holding transformation i's representation.

        Rows are indexed in the padded sequence, where 0 is the GLOBAL token,
        1..S are states, and S+1..2S are difference rows (S = N+1).
        """
        s = inp.n_states
        rows = []
        for i in range(inp.n_transformations):
            state_row = 1 + (i + 1)
            diff_row = 1 + s + (i + 1)
            if not inp.has_diff:
                rows.append((state_row,))
            elif self.rep_source == "diff":
                rows.append((diff_row,))
            elif self.rep_source == "state":
                rows.append((state_row,))
            else:
                rows.append((state_row, diff_row))
        return rows

    def forward(self, inputs: list[EncoderInput]) -> ContextBatch:
        if not inputs:
            raise ValueError("empty batch")
        device = inputs[0].features.device
        dtype = inputs[0].features.dtype
        d_model = inputs[0].features.shape[1]
        batch = len(inputs)
        row_counts = [inp.n_rows + 1 for inp in inputs]
        max_rows = max(row_counts)

        x = torch.zeros(batch, max_rows, d_model, device=device, dtype=dtype)
        key_mask = torch.zeros(batch, max_rows, dtype=torch.bool, device=device)
        for b, inp in enumerate(inputs):
            x[b, 0] = self.global_token
            x[b, 1 : 1 + inp.n_rows] = inp.features
            key_mask[b, : 1 + inp.n_rows] = True

        bias = self.pos_bias(max_rows, max_rows, device)
        for layer in self.layers:
            x = layer(x, pos_bias=bias, key_mask=key_mask)
        h = self.ln_out(x)

        n_trans = [inp.n_transformations for inp in inputs]
        max_trans = max(n_trans)
        reps = torch.zeros(batch, max_trans, d_model, device=device, dtype=dtype)
        for b, inp in enumerate(inputs):
            for i, rows in enumerate(self._rep_rows(inp)):
                rep = h[b, rows[0]]
                for r in rows[1:]:
                    rep = rep + h[b, r]
                reps[b, i] = rep

        global_reps = h[:, 0]
        category_logits = self.category_head(global_reps) if self.category_head else None
        topic_logits = self.topic_head(global_reps) if self.topic_head else None
        return ContextBatch(reps, n_trans, global_reps, category_logits, topic_logits)

    def encode_sample(self, inp: EncoderInput) -> ContextOutput:
        return self.forward([inp]).output_for(0)
