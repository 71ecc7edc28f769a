"""Final detection record produced by decoding (fused or camera-only)."""

from __future__ import annotations

from dataclasses import dataclass

from .geometry import BBox3D

SOURCE_FUSED = "fused"
SOURCE_CAMERA = "camera_only"


@dataclass(frozen=True)
class Detection:
    box: BBox3D
    score: float
    class_id: int
    source: str = SOURCE_FUSED

    def __post_init__(self):
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"detection score must be in [0, 1], got {self.score}")
        if self.source not in (SOURCE_FUSED, SOURCE_CAMERA):
            raise ValueError(f"unknown detection source {self.source!r}")
