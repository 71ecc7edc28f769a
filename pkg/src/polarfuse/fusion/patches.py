"""Distance-adaptive image patches around projected radar points.

Patch side length shrinks exponentially with radar range (nearer objects
cover more pixels), then every patch is resampled to a fixed odd-sized
square so downstream attention sees one shape with a well-defined center.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import tensorcore as tc


@dataclass(frozen=True)
class PatchConfig:
    w_scale: float = 3.5    # patch scale constant
    alpha: float = 2.0      # exponent offset
    beta: float = 55.0      # distance divisor (m)
    out_size: int = 7       # fixed resample size (pixels)

    def __post_init__(self):
        if self.w_scale <= 0 or self.beta <= 0 or self.out_size < 1:
            raise ValueError(f"invalid patch config {self}")


def patch_size_floor(d: float, cfg: PatchConfig) -> int:
    """floor(w_scale * exp(-d / beta + alpha)) before odd-rounding."""
    if d < 0:
        raise ValueError(f"distance must be >= 0, got {d}")
    return int(math.floor(cfg.w_scale * math.exp(-d / cfg.beta + cfg.alpha)))


def adaptive_patch_size(d: float, cfg: PatchConfig) -> int:
    """Patch side for a point at range d, raised to the next odd integer >= 3."""
    tau = max(patch_size_floor(d, cfg), 3)
    return tau if tau % 2 == 1 else tau + 1


def adaptive_patch_sizes(d: np.ndarray, cfg: PatchConfig) -> np.ndarray:
    """Vectorized adaptive_patch_size over an array of ranges."""
    raw = np.floor(cfg.w_scale * np.exp(-np.asarray(d, dtype=np.float64) / cfg.beta
                                        + cfg.alpha)).astype(np.int64)
    tau = np.maximum(raw, 3)
    return np.where(tau % 2 == 1, tau, tau + 1)


def _patch_grid(centers: np.ndarray, taus: np.ndarray, out: int) -> np.ndarray:
    """Sampling locations [n, out, out, 2] spanning each tau x tau window."""
    centers = np.asarray(centers, dtype=np.float64).reshape(-1, 2)
    taus = np.asarray(taus, dtype=np.float64).reshape(-1)
    n = centers.shape[0]
    steps = np.arange(out, dtype=np.float64)
    if out > 1:
        frac = steps / (out - 1) - 0.5          # [-0.5, 0.5]
    else:
        frac = np.zeros(1)
    span = (taus - 1.0)[:, None]                # window extent per point
    xs = centers[:, 0:1] + span * frac[None, :]  # [n, out]
    ys = centers[:, 1:2] + span * frac[None, :]
    grid = np.empty((n, out, out, 2))
    grid[..., 0] = xs[:, None, :]               # x varies along columns
    grid[..., 1] = ys[:, :, None]               # y varies along rows
    return grid


def extract_patches(
    featmap: tc.Tensor,
    centers: np.ndarray,
    taus: np.ndarray,
    out_size: int = 7,
) -> tc.Tensor:
    """Extract and resample patches for several points of one feature map.

    featmap [h, w, C]; centers [n, 2] in feature-map pixels. Returns
    [n, out_size, out_size, C]; regions outside the map read as zero.
    """
    grid = _patch_grid(centers, taus, out_size)
    return tc.bilinear_sample(featmap, grid)


def extract_patch(
    featmap: tc.Tensor,
    center: tuple[float, float],
    tau: int,
    out_size: int = 7,
) -> tc.Tensor:
    """Single-point convenience wrapper around extract_patches."""
    patches = extract_patches(featmap, np.array([center]), np.array([tau]), out_size)
    return tc.reshape(patches, (out_size, out_size, featmap.shape[-1]))
