"""Differentiable primitives: elementwise math, linear algebra, reductions,
normalization, and bilinear sampling.

All reductions use numpy's default (fixed) summation order so repeated runs
on one platform are bit-identical.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from .tensor import Tensor, make_node


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def constant(x) -> Tensor:
    return Tensor(np.asarray(x, dtype=np.float64), requires_grad=False)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcasted gradient back down to `shape`."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, s in enumerate(shape):
        if s == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data

    def vjp(g):
        ga = _unbroadcast(g, a.data.shape) if a.requires_grad else None
        gb = _unbroadcast(g, b.data.shape) if b.requires_grad else None
        return ga, gb

    return make_node(out, (a, b), vjp)


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = a.data - b.data

    def vjp(g):
        ga = _unbroadcast(g, a.data.shape) if a.requires_grad else None
        gb = _unbroadcast(-g, b.data.shape) if b.requires_grad else None
        return ga, gb

    return make_node(out, (a, b), vjp)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data

    def vjp(g):
        ga = _unbroadcast(g * b.data, a.data.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.data.shape) if b.requires_grad else None
        return ga, gb

    return make_node(out, (a, b), vjp)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    out = a.data * c

    def vjp(g):
        return (g * c if a.requires_grad else None,)

    return make_node(out, (a,), vjp)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError(f"matmul needs >=2-d operands, got {a.data.shape} @ {b.data.shape}")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(f"matmul inner dims differ: {a.data.shape} @ {b.data.shape}")
    out = a.data @ b.data

    def vjp(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.data.shape)
        if b.requires_grad:
            gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.data.shape)
        return ga, gb

    return make_node(out, (a, b), vjp)


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """y = x @ w + b with x of shape [..., in]."""
    n_in, n_out = w.data.shape
    if x.data.shape[-1] != n_in:
        raise ShapeError(f"linear: x has {x.data.shape[-1]} features, w expects {n_in}")
    if b.data.shape != (n_out,):
        raise ShapeError(f"linear: bias shape {b.data.shape} != ({n_out},)")
    x2 = x.data.reshape(-1, n_in)
    out = (x2 @ w.data + b.data).reshape(x.data.shape[:-1] + (n_out,))

    def vjp(g):
        g2 = g.reshape(-1, n_out)
        gx = (g2 @ w.data.T).reshape(x.data.shape) if x.requires_grad else None
        gw = x2.T @ g2 if w.requires_grad else None
        gb = g2.sum(axis=0) if b.requires_grad else None
        return gx, gw, gb

    return make_node(out, (x, w, b), vjp)


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0.0)

    def vjp(g):
        return (g * (x.data > 0.0) if x.requires_grad else None,)

    return make_node(out, (x,), vjp)


def sigmoid(x: Tensor) -> Tensor:
    z = x.data
    s = np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))),
                 np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))

    def vjp(g):
        return (g * s * (1.0 - s) if x.requires_grad else None,)

    return make_node(s, (x,), vjp)


def absolute(x: Tensor) -> Tensor:
    out = np.abs(x.data)

    def vjp(g):
        return (g * np.sign(x.data) if x.requires_grad else None,)

    return make_node(out, (x,), vjp)


def softmax(x: Tensor) -> Tensor:
    """Row-wise softmax over the last axis, max-shifted for stability."""
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        if not x.requires_grad:
            return (None,)
        dot = (g * s).sum(axis=-1, keepdims=True)
        return ((g - dot) * s,)

    return make_node(s, (x,), vjp)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    c = x.data.shape[-1]
    if gain.data.shape != (c,) or bias.data.shape != (c,):
        raise ShapeError(f"layer_norm affine shapes {gain.data.shape}/{bias.data.shape} != ({c},)")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = gain.data * xhat + bias.data

    def vjp(g):
        gx = ggain = gbias = None
        if gain.requires_grad:
            ggain = (g * xhat).reshape(-1, c).sum(axis=0)
        if bias.requires_grad:
            gbias = g.reshape(-1, c).sum(axis=0)
        if x.requires_grad:
            gh = g * gain.data
            gx = inv * (gh - gh.mean(axis=-1, keepdims=True)
                        - xhat * (gh * xhat).mean(axis=-1, keepdims=True))
        return gx, ggain, gbias

    return make_node(out, (x, gain, bias), vjp)


def sum_(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if not x.requires_grad:
            return (None,)
        if axis is None:
            return (np.broadcast_to(g, x.data.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, x.data.shape).copy(),)

    return make_node(out, (x,), vjp)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = x.data.size if axis is None else x.data.shape[axis]
    return scale(sum_(x, axis=axis, keepdims=keepdims), 1.0 / n)


def max_(x: Tensor, axis: int) -> Tensor:
    """Max over one axis; the gradient routes to the first argmax entry."""
    out = x.data.max(axis=axis)
    idx = x.data.argmax(axis=axis)

    def vjp(g):
        if not x.requires_grad:
            return (None,)
        gx = np.zeros_like(x.data)
        np.put_along_axis(gx, np.expand_dims(idx, axis),
                          np.expand_dims(g, axis), axis=axis)
        return (gx,)

    return make_node(out, (x,), vjp)


def reshape(x: Tensor, shape) -> Tensor:
    out = x.data.reshape(shape)

    def vjp(g):
        return (g.reshape(x.data.shape) if x.requires_grad else None,)

    return make_node(out, (x,), vjp)


def transpose(x: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out = x.data.transpose(axes)

    def vjp(g):
        return (g.transpose(inv) if x.requires_grad else None,)

    return make_node(out, (x,), vjp)


def concat(tensors: list[Tensor], axis: int = 0) -> Tensor:
    datas = [t.data for t in tensors]
    out = np.concatenate(datas, axis=axis)
    splits = np.cumsum([d.shape[axis] for d in datas])[:-1]

    def vjp(g):
        pieces = np.split(g, splits, axis=axis)
        return tuple(p if t.requires_grad else None for t, p in zip(tensors, pieces))

    return make_node(out, tuple(tensors), vjp)


def take_rows(x: Tensor, idx: np.ndarray) -> Tensor:
    """Gather rows along axis 0; duplicate indices accumulate on backward."""
    idx = np.asarray(idx, dtype=np.int64)
    out = x.data[idx]

    def vjp(g):
        if not x.requires_grad:
            return (None,)
        gx = np.zeros_like(x.data)
        np.add.at(gx, idx, g)
        return (gx,)

    return make_node(out, (x,), vjp)


def take_last(x: Tensor, start: int, stop: int) -> Tensor:
    """Narrow the last axis to [start, stop)."""
    out = x.data[..., start:stop]

    def vjp(g):
        if not x.requires_grad:
            return (None,)
        gx = np.zeros_like(x.data)
        gx[..., start:stop] = g
        return (gx,)

    return make_node(out, (x,), vjp)


def bce_with_logits(logits: Tensor, targets) -> Tensor:
    """Elementwise stable binary cross-entropy against constant targets."""
    t = np.asarray(targets, dtype=np.float64)
    z = logits.data
    out = np.maximum(z, 0.0) - z * t + np.log1p(np.exp(-np.abs(z)))

    def vjp(g):
        if not logits.requires_grad:
            return (None,)
        s = np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))),
                     np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))
        return (g * (s - t),)

    return make_node(out, (logits,), vjp)


def _bilinear_core(maps: np.ndarray, locs: np.ndarray, batch: np.ndarray):
    """Shared forward for bilinear sampling.

    maps [B, H, W, C]; locs [M, 2] as (x, y); batch [M] map index per loc.
    Out-of-bounds corner cells contribute zero (zero padding).
    """
    _, h, w, _ = maps.shape
    x = locs[:, 0]
    y = locs[:, 1]
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    fx = x - x0
    fy = y - y0
    corners = []
    for dy in (0, 1):
        for dx in (0, 1):
            yy = y0 + dy
            xx = x0 + dx
            valid = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
            yc = np.clip(yy, 0, h - 1)
            xc = np.clip(xx, 0, w - 1)
            val = maps[batch, yc, xc, :] * valid[:, None]
            wgt = (fy if dy else 1.0 - fy) * (fx if dx else 1.0 - fx)
            corners.append((val, wgt, valid, yc, xc, dy, dx))
    out = sum(val * wgt[:, None] for val, wgt, *_ in corners)
    return out, corners, (x0, y0, fx, fy)


def _bilinear_vjps(g, maps_t, locs_t, maps, locs, batch, corners, fracs):
    gmaps = glocs = None
    fx, fy = fracs[2], fracs[3]
    if maps_t is not None and maps_t.requires_grad:
        gmaps = np.zeros_like(maps)
        b, h, w, c = maps.shape
        for val, wgt, valid, yc, xc, dy, dx in corners:
            contrib = g * (wgt * valid)[:, None]
            flat = ((batch * h + yc) * w + xc)
            np.add.at(gmaps.reshape(-1, c), flat, contrib)
    if locs_t is not None and locs_t.requires_grad:
        (v00, _, _, _, _, _, _) = corners[0]
        v01 = corners[1][0]
        v10 = corners[2][0]
        v11 = corners[3][0]
        dout_dx = (v01 - v00) * (1.0 - fy)[:, None] + (v11 - v10) * fy[:, None]
        dout_dy = (v10 - v00) * (1.0 - fx)[:, None] + (v11 - v01) * fx[:, None]
        glocs = np.stack([(g * dout_dx).sum(axis=-1), (g * dout_dy).sum(axis=-1)], axis=-1)
    return gmaps, glocs


def bilinear_sample(map_t: Tensor, locs) -> Tensor:
    """Sample a [H, W, C] map at continuous (x, y) pixel locations [..., 2]."""
    locs_t = locs if isinstance(locs, Tensor) else None
    locs_np = locs.data if isinstance(locs, Tensor) else np.asarray(locs, dtype=np.float64)
    lead = locs_np.shape[:-1]
    flat = locs_np.reshape(-1, 2)
    maps = map_t.data[None]
    batch = np.zeros(flat.shape[0], dtype=np.int64)
    out, corners, fracs = _bilinear_core(maps, flat, batch)
    c = map_t.data.shape[-1]
    parents = (map_t,) if locs_t is None else (map_t, locs_t)

    def vjp(g):
        g2 = g.reshape(-1, c)
        gmaps, glocs = _bilinear_vjps(g2, map_t, locs_t, maps, flat, batch, corners, fracs)
        gm = gmaps[0] if gmaps is not None else None
        if locs_t is None:
            return (gm,)
        return gm, (glocs.reshape(locs_np.shape) if glocs is not None else None)

    return make_node(out.reshape(lead + (c,)), parents, vjp)


def bilinear_sample_batched(maps_t: Tensor, locs) -> Tensor:
    """Sample per-query maps [N, H, W, C] at locations [N, ..., 2]."""
    locs_t = locs if isinstance(locs, Tensor) else None
    locs_np = locs.data if isinstance(locs, Tensor) else np.asarray(locs, dtype=np.float64)
    n = maps_t.data.shape[0]
    if locs_np.shape[0] != n:
        raise ShapeError(f"batched sample: {locs_np.shape[0]} loc groups for {n} maps")
    lead = locs_np.shape[:-1]
    flat = locs_np.reshape(-1, 2)
    per = flat.shape[0] // n if n else 0
    batch = np.repeat(np.arange(n, dtype=np.int64), per)
    out, corners, fracs = _bilinear_core(maps_t.data, flat, batch)
    c = maps_t.data.shape[-1]
    parents = (maps_t,) if locs_t is None else (maps_t, locs_t)

    def vjp(g):
        g2 = g.reshape(-1, c)
        gmaps, glocs = _bilinear_vjps(g2, maps_t, locs_t, maps_t.data, flat, batch,
                                      corners, fracs)
        if locs_t is None:
            return (gmaps,)
        return gmaps, (glocs.reshape(locs_np.shape) if glocs is not None else None)

    return make_node(out.reshape(lead + (c,)), parents, vjp)
