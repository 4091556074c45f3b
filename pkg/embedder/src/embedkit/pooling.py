"""Pooling of transformer hidden states into sentence vectors.

Mean pooling (attention-mask weighted) works for every architecture and is
the default. CLS pooling takes the first token of the final hidden states
and is only meaningful for bidirectional encoders, so it is rejected for
causal (decoder-only) models.
"""

from __future__ import annotations

import torch
from transformers.models.auto.modeling_auto import (
    MODEL_FOR_CAUSAL_LM_MAPPING_NAMES,
    MODEL_FOR_MASKED_LM_MAPPING_NAMES,
)

POOLINGS = ("cls", "mean")


def model_kind(config) -> str:
    """Classify a checkpoint config: encoder, decoder, or encoder-decoder."""
    if getattr(config, "is_encoder_decoder", False):
        return "encoder-decoder"
    if config.model_type in MODEL_FOR_MASKED_LM_MAPPING_NAMES:
        return "encoder"
    if config.model_type in MODEL_FOR_CAUSAL_LM_MAPPING_NAMES:
        return "decoder"
    return "encoder"


def check_pooling(pooling: str, kind: str) -> None:
    if pooling not in POOLINGS:
        raise ValueError(f"unknown pooling {pooling!r}")
    if pooling == "cls" and kind == "decoder":
        raise ValueError("cls pooling needs a bidirectional encoder; "
                         "use mean pooling for decoder-only models")


def pool_hidden_states(hidden: torch.Tensor, attention_mask: torch.Tensor,
                       pooling: str) -> torch.Tensor:
    """Reduce (batch, seq, dim) final hidden states to (batch, dim)."""
    if pooling == "cls":
        return hidden[:, 0, :]
    mask = attention_mask.unsqueeze(-1).to(hidden.dtype)
    summed = (hidden * mask).sum(dim=1)
    counts = mask.sum(dim=1).clamp(min=1.0)
    return summed / counts
