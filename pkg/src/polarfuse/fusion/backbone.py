"""Radar point feature encoder: stacked single-scale set abstraction.

Every stage ball-queries neighbors around each point (no subsampling, the
point count is unchanged), runs a shared MLP with layer normalization over
(features, relative position) of each neighbor, and max-pools the
neighborhood. Radii, neighbor caps, and channel plans are configuration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import tensorcore as tc
from ..tensorcore import Parameter


@dataclass(frozen=True)
class StageConfig:
    radius: float
    nsample: int
    channels: tuple[int, ...]


@dataclass(frozen=True)
class BackboneConfig:
    stages: tuple[StageConfig, ...] = (
        StageConfig(0.4, 4, (16, 16, 32)),
        StageConfig(0.8, 4, (32, 32, 64)),
        StageConfig(1.2, 8, (64, 64, 128)),
        StageConfig(1.6, 8, (128, 128, 256)),
    )

    @property
    def out_channels(self) -> int:
        return self.stages[-1].channels[-1]


def ball_query_neighbors(positions: np.ndarray, radius: float, nsample: int) -> np.ndarray:
    """[K, nsample] neighbor indices within radius, nearest first.

    Each point is its own nearest neighbor; short neighborhoods are padded
    by repeating the nearest entry, which is a no-op under max pooling.
    """
    pos = np.asarray(positions, dtype=np.float64)
    k = pos.shape[0]
    d2 = ((pos[:, None, :] - pos[None, :, :]) ** 2).sum(axis=-1)
    order = np.argsort(d2, axis=1, kind="stable")[:, :nsample]
    if order.shape[1] < nsample:
        pad = np.repeat(order[:, :1], nsample - order.shape[1], axis=1)
        order = np.concatenate([order, pad], axis=1)
    within = np.take_along_axis(d2, order, axis=1) <= radius * radius
    # Pad out-of-radius slots with each point's nearest entry (distance 0).
    return np.where(within, order, order[:, :1])


class RadarBackbone:
    def __init__(self, rng: np.random.Generator, cfg: BackboneConfig,
                 in_features: int, prefix: str = "backbone"):
        self.cfg = cfg
        self.stage_params: list[list[tuple[Parameter, Parameter, Parameter, Parameter]]] = []
        c_in = in_features
        for si, stage in enumerate(cfg.stages):
            layers = []
            width = c_in + 3  # neighbor features + relative position
            for li, c_out in enumerate(stage.channels):
                scale = np.sqrt(1.0 / width)
                w = Parameter(rng.uniform(-scale, scale, size=(width, c_out)),
                              f"{prefix}/sa{si}/mlp{li}/w")
                b = Parameter(np.zeros(c_out), f"{prefix}/sa{si}/mlp{li}/b")
                g = Parameter(np.ones(c_out), f"{prefix}/sa{si}/mlp{li}/ln_g")
                be = Parameter(np.zeros(c_out), f"{prefix}/sa{si}/mlp{li}/ln_b")
                layers.append((w, b, g, be))
                width = c_out
            self.stage_params.append(layers)
            c_in = stage.channels[-1]

    def parameters(self) -> list[Parameter]:
        return [p for stage in self.stage_params for layer in stage for p in layer]

    def forward(self, positions: np.ndarray, features: tc.Tensor) -> tc.Tensor:
        """positions [K, 3] (numpy); features [K, F] -> [K, out_channels]."""
        k = positions.shape[0]
        x = features
        for stage, layers in zip(self.cfg.stages, self.stage_params):
            idx = ball_query_neighbors(positions, stage.radius, stage.nsample)
            rel = positions[idx] - positions[:, None, :]          # [K, ns, 3]
            gathered = tc.reshape(tc.take_rows(x, idx.reshape(-1)),
                                  (k, stage.nsample, x.shape[-1]))
            grouped = tc.concat([gathered, tc.constant(rel)], axis=-1)
            for w, b, g, be in layers:
                grouped = tc.relu(tc.layer_norm(tc.linear(grouped, w, b), g, be))
            x = tc.max_(grouped, axis=1)                          # [K, c_out]
        return x
