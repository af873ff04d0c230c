"""TTNet: difference-sensitive encoder-decoder for transformation telling.

Pipeline per sample: project provider embeddings to model width, compute
semantic difference rows (late fusion by default, or on raw embeddings for
early fusion), tag rows with type embeddings, contextualize with the
transformer encoder, then decode each transformation representation with the
shared text decoder.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import torch
from torch import Tensor, nn

from ..encoding import EncoderInput, assemble_encoder_input, difference_features
from .context import ContextBatch, ContextEncoder, ContextOutput
from .decoder import TextDecoder

DIFF_FUSIONS = ("late", "early")
DIFF_FIRST_MODES = ("wrap", "zero")


@dataclass(frozen=True)
class TTNetConfig:
    # vocab/label sizes are placeholders until bound to a dataset (train()
    # replaces them from the manifest and vocabulary).
    vocab_size: int = 4
    n_categories: int = 1
    n_topics: int = 1
    d_enc: int = 768
    d_model: int = 512
    n_heads: int = 8
    n_encoder_layers: int = 2
    n_decoder_layers: int = 2
    ffn_mult: int = 4
    rel_buckets: int = 32
    rel_max_distance: int = 128
    dropout: float = 0.0
    max_len: int = 16
    use_diff: bool = True
    use_aux: bool = True
    rep_source: str = "diff"
    diff_first: str = "wrap"
    diff_fusion: str = "late"
    tie_embeddings: bool = False

    def validate(self) -> None:
        if self.d_model % self.n_heads != 0:
            raise ValueError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if self.diff_fusion not in DIFF_FUSIONS:
            raise ValueError(f"diff_fusion must be one of {DIFF_FUSIONS}")
        if self.diff_first not in DIFF_FIRST_MODES:
            raise ValueError(f"diff_first must be one of {DIFF_FIRST_MODES}")
        if self.rel_buckets < 4:
            raise ValueError("rel_buckets must be >= 4")

    def to_dict(self) -> dict:
        return asdict(self)


class TTNet(nn.Module):
    def __init__(self, cfg: TTNetConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.projector = nn.Linear(cfg.d_enc, cfg.d_model)
        if cfg.use_diff:
            self.type_emb = nn.Parameter(torch.zeros(2, cfg.d_model))
            nn.init.normal_(self.type_emb, std=0.02)
        else:
            self.type_emb = None
        self.encoder = ContextEncoder(
            d_model=cfg.d_model,
            n_heads=cfg.n_heads,
            n_layers=cfg.n_encoder_layers,
            ffn_width=cfg.ffn_mult * cfg.d_model,
            n_categories=cfg.n_categories if cfg.use_aux else None,
            n_topics=cfg.n_topics if cfg.use_aux else None,
            rel_buckets=cfg.rel_buckets,
            rel_max_distance=cfg.rel_max_distance,
            dropout=cfg.dropout,
            rep_source=cfg.rep_source,
        )
        self.decoder = TextDecoder(
            vocab_size=cfg.vocab_size,
            d_model=cfg.d_model,
            n_heads=cfg.n_heads,
            n_layers=cfg.n_decoder_layers,
            ffn_width=cfg.ffn_mult * cfg.d_model,
            rel_buckets=cfg.rel_buckets,
            rel_max_distance=cfg.rel_max_distance,
            dropout=cfg.dropout,
            tie_embeddings=cfg.tie_embeddings,
        )

    def build_encoder_input(
        self,
        raw_states: Tensor,
        mask_plan: Tensor | None = None,
        zero_states: list[int] | None = None,
    ) -> EncoderInput:
        """Assemble one sample's encoder rows from raw (S, d_enc) embeddings.

        zero_states lists state indices treated as missing: the state value
        is zeroed before difference rows are computed (so adjacent diffs see
        a zero state), and the state row itself is masked like an MTM row.
        """
        if raw_states.ndim != 2 or raw_states.shape[1] != self.cfg.d_enc:
            raise ValueError(
                f"raw states must be (S, {self.cfg.d_enc}), got {tuple(raw_states.shape)}"
            )
        s = raw_states.shape[0]
        param = self.projector.weight
        raw_states = raw_states.to(device=param.device, dtype=param.dtype)

        diffs = None
        if self.cfg.use_diff and self.cfg.diff_fusion == "early":
            raw_for_diff = raw_states
            if zero_states:
                raw_for_diff = raw_for_diff.clone()
                raw_for_diff[zero_states] = 0.0
            diffs = self.projector(difference_features(raw_for_diff, self.cfg.diff_first))

        states_proj = self.projector(raw_states)
        if zero_states:
            states_proj = states_proj.clone()
            states_proj[zero_states] = 0.0
        if self.cfg.use_diff and self.cfg.diff_fusion == "late":
            diffs = difference_features(states_proj, self.cfg.diff_first)

        n_rows = 2 * s if self.cfg.use_diff else s
        if mask_plan is None:
            plan = torch.zeros(n_rows, dtype=torch.bool, device=param.device)
        else:
            plan = torch.as_tensor(mask_plan, dtype=torch.bool, device=param.device).clone()
        if zero_states:
            for idx in zero_states:
                plan[idx] = True
        return assemble_encoder_input(states_proj, diffs, self.type_emb, plan)

    def encode_batch(
        self,
        raw_state_mats: list[Tensor],
        mask_plans: list[Tensor] | None = None,
        zero_states: list[list[int] | None] | None = None,
    ) -> ContextBatch:
        inputs = []
        for b, mat in enumerate(raw_state_mats):
            plan = mask_plans[b] if mask_plans is not None else None
            zs = zero_states[b] if zero_states is not None else None
            inputs.append(self.build_encoder_input(mat, plan, zs))
        return self.encoder(inputs)

    def encode_sample(
        self,
        raw_states: Tensor,
        mask_plan: Tensor | None = None,
        zero_states: list[int] | None = None,
    ) -> ContextOutput:
        return self.encode_batch([raw_states], [mask_plan], [zero_states]).output_for(0)

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())
