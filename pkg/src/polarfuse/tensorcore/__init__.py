"""Minimal dense-tensor kernel with reverse-mode gradients."""

from .tensor import Parameter, Tensor, backward, zero_grads
from . import ops
from .ops import (
    absolute,
    add,
    as_tensor,
    bce_with_logits,
    bilinear_sample,
    bilinear_sample_batched,
    concat,
    constant,
    layer_norm,
    linear,
    matmul,
    max_,
    mean,
    mul,
    relu,
    reshape,
    scale,
    sigmoid,
    softmax,
    sub,
    sum_,
    take_last,
    take_rows,
    transpose,
)
from .attention import (
    DeformableParams,
    MHAParams,
    deformable_cross_attention,
    init_deformable_params,
    init_mha_params,
    mh_cross_attention,
)
from .optim import AdamW, clip_global_norm, cosine_lr
from .checkpoint import load_tensors, save_tensors
from .gradcheck import finite_difference_check, scaled_error

__all__ = [
    "Tensor", "Parameter", "backward", "zero_grads", "ops",
    "absolute", "add", "as_tensor", "bce_with_logits", "bilinear_sample",
    "bilinear_sample_batched", "concat", "constant", "layer_norm", "linear",
    "matmul", "max_", "mean", "mul", "relu", "reshape", "scale", "sigmoid",
    "softmax", "sub", "sum_", "take_last", "take_rows", "transpose",
    "MHAParams", "DeformableParams", "mh_cross_attention",
    "deformable_cross_attention", "init_mha_params", "init_deformable_params",
    "AdamW", "clip_global_norm", "cosine_lr",
    "save_tensors", "load_tensors",
    "finite_difference_check", "scaled_error",
]
