"""Image proposal type: the output contract of the camera detection stage."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import BBox3D


@dataclass(frozen=True)
class ImageProposal:
    """A camera-predicted 3D box plus the attributes fusion consumes."""

    box: BBox3D
    depth_var: float              # depth regression variance (m^2)
    class_conf: float             # classifier confidence in [0, 1]
    class_id: int
    feature: np.ndarray           # C-dim keypoint feature
    keypoint: tuple[float, float]  # projected 3D center (u, v) in image pixels
    camera_id: int = 0

    def __post_init__(self):
        if self.depth_var < 0:
            raise ValueError(f"depth_var must be >= 0, got {self.depth_var}")
        if not (0.0 <= self.class_conf <= 1.0):
            raise ValueError(f"class_conf must be in [0, 1], got {self.class_conf}")
        object.__setattr__(self, "feature", np.asarray(self.feature, dtype=np.float64).reshape(-1))

    def score_3d(self) -> float:
        """Depth-readjusted confidence: exp(-depth_var) * class_conf."""
        return math.exp(-self.depth_var) * self.class_conf
