"""Turn per-state embeddings into the context-encoder input rows.

The encoder consumes, per sample, the projected state vectors followed by
their semantic difference vectors, each row tagged with a learned type
embedding (STATE or DIFF). Masked rows are fully zeroed: no feature content
and no type embedding, so a masked row carries no information at all.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import Tensor

STATE_TYPE = 0
DIFF_TYPE = 1


@dataclass
class EncoderInput:
    """Assembled encoder rows for one sample.

    features: (R, d_model) with R = 2*(N+1) when difference rows are present,
    else N+1. type_ids tags each row STATE or DIFF; mask marks rows that were
    zeroed before encoding.
    """

    features: Tensor
    type_ids: Tensor
    mask: Tensor
    n_states: int
    has_diff: bool

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_transformations(self) -> int:
        return self.n_states - 1


def project_states(raw: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map of (S, d_enc) state vectors to (S, d_model)."""
    if raw.shape[-1] != weight.shape[1]:
        raise ValueError(f"state width {raw.shape[-1]} != projection input {weight.shape[1]}")
    return raw @ weight.t() + bias


def difference_features(states: Tensor, first: str = "wrap") -> Tensor:
    """Adjacent differences v_i - v_{i-1}, one row per state.

    Row 0 is the wrap-around difference against the final state when
    first="wrap", or a zero row when first="zero". Rows 1..N are the plain
    adjacent differences.
    """
    if states.shape[0] < 2:
        raise ValueError(f"need at least 2 states, got {states.shape[0]}")
    if first not in ("wrap", "zero"):
        raise ValueError(f"unknown first-difference mode {first!r}")
    shifted = torch.cat([states[-1:], states[:-1]], dim=0)
    diffs = states - shifted
    if first == "zero":
        diffs = torch.cat([torch.zeros_like(diffs[:1]), diffs[1:]], dim=0)
    return diffs


def assemble_encoder_input(
    states_proj: Tensor,
    diffs: Tensor | None,
    type_embeddings: Tensor | None,
    mask_plan: Tensor | None,
) -> EncoderInput:
    """Concatenate state and difference rows, add type embeddings, apply mask.

    Masked rows become exact zero vectors; the type embedding is skipped for
    them entirely. With diffs=None the input is state rows only and
    type_embeddings must be None as well (a single row type needs no tag).
    """
    n_states = states_proj.shape[0]
    if diffs is not None:
        if diffs.shape != states_proj.shape:
            raise ValueError(f"diff shape {tuple(diffs.shape)} != state shape {tuple(states_proj.shape)}")
        features = torch.cat([states_proj, diffs], dim=0)
        type_ids = torch.cat(
            [
                torch.full((n_states,), STATE_TYPE, dtype=torch.long, device=features.device),
                torch.full((n_states,), DIFF_TYPE, dtype=torch.long, device=features.device),
            ]
        )
    else:
        if type_embeddings is not None:
            raise ValueError("type embeddings are only defined when difference rows are present")
        features = states_proj
        type_ids = torch.full((n_states,), STATE_TYPE, dtype=torch.long, device=features.device)

    n_rows = features.shape[0]
    if mask_plan is None:
        mask = torch.zeros(n_rows, dtype=torch.bool, device=features.device)
    else:
        mask = torch.as_tensor(mask_plan, dtype=torch.bool, device=features.device)
        if mask.shape != (n_rows,):
            raise ValueError(f"mask plan length {tuple(mask.shape)} != row count {n_rows}")

    if type_embeddings is not None:
        features = features + type_embeddings[type_ids]
    features = torch.where(mask.unsqueeze(-1), torch.zeros_like(features), features)
    return EncoderInput(
        features=features, type_ids=type_ids, mask=mask, n_states=n_states, has_diff=diffs is not None
    )
