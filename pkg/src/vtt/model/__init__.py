from .context import ContextEncoder, ContextOutput, MTMPolicy, sample_mask_plan
from .decoder import (
    GenerationResult,
    SamplingConfig,
    TextDecoder,
    nll_loss,
    sample_description,
    top_k_top_p_filter,
)
from .ttnet import TTNet, TTNetConfig

__all__ = [
    "ContextEncoder",
    "ContextOutput",
    "MTMPolicy",
    "sample_mask_plan",
    "GenerationResult",
    "SamplingConfig",
    "TextDecoder",
    "nll_loss",
    "sample_description",
    "top_k_top_p_filter",
    "TTNet",
    "TTNetConfig",
]
