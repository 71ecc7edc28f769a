"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

from .tensor import Parameter, Tensor, backward, zero_grads


def scaled_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    """|a - n| scaled by max(1, |a| + |n|); robust where gradients vanish."""
    return np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic) + np.abs(numeric))


def finite_difference_check(
    build_loss: Callable[[], Tensor],
    wrt: Iterable[Parameter],
    h: float = 1e-5,
) -> float:
    """Max scaled error between backward() and central differences.

    build_loss must rebuild the graph from the current parameter values on
    every call and must be deterministic.
    """
    wrt = list(wrt)
    zero_grads(wrt)
    backward(build_loss())
    analytic = {id(p): p.grad.copy() for p in wrt}
    worst = 0.0
    for p in wrt:
        flat = p.data.reshape(-1)
        numeric = np.zeros_like(flat)
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + h
            up = build_loss().item()
            flat[i] = saved - h
            down = build_loss().item()
            flat[i] = saved
            numeric[i] = (up - down) / (2.0 * h)
        err = scaled_error(analytic[id(p)].reshape(-1), numeric)
        worst = max(worst, float(err.max()) if err.size else 0.0)
    return worst
