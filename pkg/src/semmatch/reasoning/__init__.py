"""Learnable descriptor refinement: attention stack, weights, gradients."""

from .engine import (
    ForwardBackwardResult,
    LayerTrace,
    PairInputs,
    attention_update,
    forward_backward,
    pair_loss,
    refine,
    zero_grads,
)
from .gradcheck import GradCheckReport, finite_difference_check, standard_check
from .weights import (
    AffineParams,
    AttentionLayerParams,
    LayerNormParams,
    ReasoningConfig,
    ReasoningWeights,
    init_weights,
    load_weights,
    save_weights,
    weights_from_tensors,
)

__all__ = [
    "AffineParams",
    "AttentionLayerParams",
    "ForwardBackwardResult",
    "GradCheckReport",
    "LayerNormParams",
    "LayerTrace",
    "PairInputs",
    "ReasoningConfig",
    "ReasoningWeights",
    "attention_update",
    "finite_difference_check",
    "forward_backward",
    "init_weights",
    "load_weights",
    "pair_loss",
    "refine",
    "save_weights",
    "standard_check",
    "weights_from_tensors",
    "zero_grads",
]
