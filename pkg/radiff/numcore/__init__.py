"""
Numcore
=======

Defines the numerical substrate every network of *radiff* trains on: dense
64-bit tensors with reverse-mode automatic differentiation, attention and
perceptron building blocks, the *AdamW* optimizer and learning rate schedules.
"""

from __future__ import annotations

from .layers import (
    MLP,
    Embedding,
    FeedForward,
    LayerNorm,
    Linear,
    Module,
    ModuleList,
    MultiHeadAttention,
    TransformerBlock,
    activate,
    attention_block,
    scaled_dot_product_attention,
    sinusoidal_embedding,
)
from .optim import AdamW, LrSchedule, OptimizerState, adamw_step, lr_value
from .tensor import (
    Parameter,
    Tensor,
    as_tensor,
    concat,
    gradcheck,
    is_grad_enabled,
    matmul,
    no_grad,
    softmax,
    stack,
    where,
)

__author__ = "Radiff Developers"
__copyright__ = "Copyright 2025 Radiff Developers"
__license__ = "BSD-3-Clause - https://opensource.org/licenses/BSD-3-Clause"
__maintainer__ = "Radiff Developers"
__email__ = "radiff-developers@radiff.org"
__status__ = "Production"

__all__ = [
    "Tensor",
    "Parameter",
    "as_tensor",
    "concat",
    "stack",
    "where",
    "softmax",
    "matmul",
    "no_grad",
    "is_grad_enabled",
    "gradcheck",
    "Module",
    "ModuleList",
    "Linear",
    "MLP",
    "LayerNorm",
    "Embedding",
    "MultiHeadAttention",
    "FeedForward",
    "TransformerBlock",
    "activate",
    "attention_block",
    "scaled_dot_product_attention",
    "sinusoidal_embedding",
    "OptimizerState",
    "AdamW",
    "adamw_step",
    "LrSchedule",
    "lr_value",
]
