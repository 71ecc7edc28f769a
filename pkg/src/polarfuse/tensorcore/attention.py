"""Cross-attention blocks: scaled dot-product with an optional zero sink,
and single-scale deformable sampling attention.

The zero sink appends one all-zero key/value row after the input
projections (so its logits are exactly zero), letting a query assign its
mass to "nothing useful" when no key is relevant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from ..errors import ConfigError
from . import ops
from .tensor import Parameter, Tensor


@dataclass
class MHAParams:
    w_q: Parameter
    b_q: Parameter
    w_k: Parameter
    b_k: Parameter
    w_v: Parameter
    b_v: Parameter
    w_o: Parameter
    b_o: Parameter

    def parameters(self) -> list[Parameter]:
        return [getattr(self, f.name) for f in fields(self)]


def init_mha_params(rng: np.random.Generator, width: int, prefix: str) -> MHAParams:
    def w(name):
        scale = math.sqrt(1.0 / width)
        return Parameter(rng.uniform(-scale, scale, size=(width, width)), f"{prefix}/{name}")

    def b(name):
        return Parameter(np.zeros(width), f"{prefix}/{name}")

    return MHAParams(w("w_q"), b("b_q"), w("w_k"), b("b_k"),
                     w("w_v"), b("b_v"), w("w_o"), b("b_o"))


def _split_heads(x: Tensor, heads: int) -> Tensor:
    n, c = x.shape
    x = ops.reshape(x, (n, heads, c // heads))
    return ops.transpose(x, (1, 0, 2))  # [heads, n, dh]


def mh_cross_attention(
    q: Tensor,
    kv: Tensor,
    params: MHAParams,
    heads: int,
    zero_sink: bool = False,
    return_weights: bool = False,
):
    """Scaled dot-product cross-attention: q [Lq, C] against kv [Lk, C]."""
    c = q.shape[-1]
    if c % heads != 0:
        raise ConfigError(f"width {c} not divisible by {heads} heads")
    dh = c // heads
    qp = ops.linear(q, params.w_q, params.b_q)
    kp = ops.linear(kv, params.w_k, params.b_k)
    vp = ops.linear(kv, params.w_v, params.b_v)
    if zero_sink:
        sink = ops.constant(np.zeros((1, c)))
        kp = ops.concat([kp, sink], axis=0)
        vp = ops.concat([vp, sink], axis=0)
    qh = _split_heads(qp, heads)                       # [H, Lq, dh]
    kh = _split_heads(kp, heads)                       # [H, Lk', dh]
    vh = _split_heads(vp, heads)
    scores = ops.scale(ops.matmul(qh, ops.transpose(kh, (0, 2, 1))), 1.0 / math.sqrt(dh))
    attn = ops.softmax(scores)                         # [H, Lq, Lk']
    ctx = ops.matmul(attn, vh)                         # [H, Lq, dh]
    merged = ops.reshape(ops.transpose(ctx, (1, 0, 2)), (q.shape[0], c))
    out = ops.linear(merged, params.w_o, params.b_o)
    if return_weights:
        return out, attn.data.copy()
    return out


@dataclass
class DeformableParams:
    w_offset: Parameter   # [C, heads * points * 2], zero-initialized
    b_offset: Parameter
    w_weight: Parameter   # [C, heads * points], zero-initialized
    b_weight: Parameter
    w_value: Parameter    # [C, C]
    b_value: Parameter
    w_out: Parameter      # [C, C]
    b_out: Parameter

    def parameters(self) -> list[Parameter]:
        return [getattr(self, f.name) for f in fields(self)]


def init_deformable_params(
    rng: np.random.Generator, width: int, heads: int, n_points: int, prefix: str
) -> DeformableParams:
    # Offsets and weight logits start at zero: the first forward pass is a
    # uniform local average around the reference point.
    scale = math.sqrt(1.0 / width)
    return DeformableParams(
        w_offset=Parameter(np.zeros((width, heads * n_points * 2)), f"{prefix}/w_offset"),
        b_offset=Parameter(np.zeros(heads * n_points * 2), f"{prefix}/b_offset"),
        w_weight=Parameter(np.zeros((width, heads * n_points)), f"{prefix}/w_weight"),
        b_weight=Parameter(np.zeros(heads * n_points), f"{prefix}/b_weight"),
        w_value=Parameter(rng.uniform(-scale, scale, size=(width, width)), f"{prefix}/w_value"),
        b_value=Parameter(np.zeros(width), f"{prefix}/b_value"),
        w_out=Parameter(rng.uniform(-scale, scale, size=(width, width)), f"{prefix}/w_out"),
        b_out=Parameter(np.zeros(width), f"{prefix}/b_out"),
    )


def _head_selector(heads: int, width: int) -> np.ndarray:
    """Constant [heads, width, width//heads] picking each head's channels."""
    dh = width // heads
    sel = np.zeros((heads, width, dh))
    for h in range(heads):
        sel[h, h * dh:(h + 1) * dh, :] = np.eye(dh)
    return sel


def deformable_cross_attention(
    q: Tensor,
    refs: np.ndarray,
    maps: Tensor,
    params: DeformableParams,
    heads: int,
    n_points: int,
    return_weights: bool = False,
):
    """Attend from each query to learned sampling points around its reference.

    q [Lq, C]; refs [Lq, 2] as (x, y) in map pixels; maps either one shared
    [H, W, C] map or per-query [Lq, H, W, C]. Each head samples its own
    channel slice of the value-projected map at ref + learned offsets, and
    blends the samples with softmax weights predicted from the query.
    """
    lq, c = q.shape
    if c % heads != 0:
        raise ConfigError(f"width {c} not divisible by {heads} heads")
    if n_points < 1:
        raise ConfigError(f"need at least one sampling point, got {n_points}")
    dh = c // heads
    refs = np.asarray(refs, dtype=np.float64).reshape(lq, 1, 1, 2)

    offsets = ops.reshape(ops.linear(q, params.w_offset, params.b_offset),
                          (lq, heads, n_points, 2))
    locs = ops.add(offsets, ops.constant(refs))
    logits = ops.reshape(ops.linear(q, params.w_weight, params.b_weight),
                         (lq, heads, n_points))
    weights = ops.softmax(logits)                      # [Lq, H, P]

    per_query = maps.data.ndim == 4
    vmap = ops.linear(maps, params.w_value, params.b_value)
    if per_query:
        sampled = ops.bilinear_sample_batched(vmap, locs)   # [Lq, H, P, C]
    else:
        sampled = ops.bilinear_sample(vmap, locs)           # [Lq, H, P, C]
    # Select each head's channel slice: [Lq, H, P, C] @ [H, C, dh].
    sel = ops.constant(_head_selector(heads, c))
    per_head = ops.matmul(sampled, sel)                     # [Lq, H, P, dh]
    blended = ops.sum_(ops.mul(per_head, ops.reshape(weights, (lq, heads, n_points, 1))),
                       axis=2)                              # [Lq, H, dh]
    merged = ops.reshape(blended, (lq, c))
    out = ops.linear(merged, params.w_out, params.b_out)
    if return_weights:
        return out, weights.data.copy()
    return out
