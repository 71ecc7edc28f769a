"""Coordinate transforms between image, camera, vehicle, and polar frames.

Conventions used throughout the package:

- Vehicle frame: +x forward, +y left, +z up. Azimuth is measured
  counter-clockwise from +x and always normalized to [-pi, pi).
- Box yaw follows the same convention; ``l`` (length) runs along the
  heading, ``w`` (width) across it, ``h`` along z.
- Camera frame: +x right, +y down, +z forward (optical axis).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BehindCameraError

TWO_PI = 2.0 * math.pi


def wrap_angle(a):
    """Normalize an angle (scalar or array) to [-pi, pi)."""
    return (a + math.pi) % TWO_PI - math.pi


def angle_diff(a, b):
    """Wrapped difference a - b in [-pi, pi)."""
    return wrap_angle(a - b)


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics; focal lengths and principal point in pixels."""

    fu: float
    fv: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fu > 0 and self.fv > 0):
            raise ValueError(f"focal lengths must be positive, got fu={self.fu}, fv={self.fv}")


@dataclass(frozen=True)
class Pose:
    """Rigid transform: p_out = rotation @ p_in + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not np.allclose(r.T @ r, np.eye(3), atol=1e-9):
            raise ValueError("rotation is not orthonormal within 1e-9")
        if not math.isclose(float(np.linalg.det(r)), 1.0, abs_tol=1e-9):
            raise ValueError("rotation must have det +1")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.eye(3), np.zeros(3))

    @staticmethod
    def from_yaw(yaw: float, translation=(0.0, 0.0, 0.0)) -> "Pose":
        c, s = math.cos(yaw), math.sin(yaw)
        r = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        return Pose(r, np.asarray(translation, dtype=np.float64))

    def inverse(self) -> "Pose":
        rt = self.rotation.T
        return Pose(rt, -rt @ self.translation)

    def compose(self, other: "Pose") -> "Pose":
        """self after other: (self ∘ other)(p) = self(other(p))."""
        return Pose(self.rotation @ other.rotation,
                    self.rotation @ other.translation + self.translation)


@dataclass(frozen=True)
class BBox3D:
    """Oriented 3D box in the vehicle frame.

    dims is (w, l, h): width across the heading, length along it, height
    along z. velocity is the BEV (vx, vy) of the box.
    """

    center: np.ndarray
    dims: np.ndarray
    yaw: float
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        c = np.asarray(self.center, dtype=np.float64).reshape(3)
        d = np.asarray(self.dims, dtype=np.float64).reshape(3)
        v = np.asarray(self.velocity, dtype=np.float64).reshape(2)
        if not np.all(d > 0):
            raise ValueError(f"box dims must be positive, got {d}")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "dims", d)
        object.__setattr__(self, "velocity", v)
        object.__setattr__(self, "yaw", float(wrap_angle(self.yaw)))

    @property
    def bev_radius(self) -> float:
        """Circumradius of the BEV footprint."""
        w, l, _ = self.dims
        return 0.5 * math.hypot(w, l)


@dataclass(frozen=True)
class PolarPoint:
    """(range, azimuth, height) in the vehicle frame."""

    r: float
    phi: float
    z: float

    def __post_init__(self):
        if self.r < 0:
            raise ValueError(f"polar range must be >= 0, got {self.r}")
        object.__setattr__(self, "phi", float(wrap_angle(self.phi)))


def unproject_keypoint(u: float, v: float, d: float, k: CameraIntrinsics) -> np.ndarray:
    """Lift an image keypoint at depth d to the camera frame."""
    if not all(math.isfinite(x) for x in (u, v, d)):
        raise ValueError(f"non-finite keypoint inputs ({u}, {v}, {d})")
    if d < 0:
        raise ValueError(f"depth must be >= 0, got {d}")
    x = (u - k.cx) * d / k.fu
    y = (v - k.cy) * d / k.fv
    return np.array([x, y, d], dtype=np.float64)


def project_point(p, k: CameraIntrinsics) -> tuple[float, float]:
    """Project a camera-frame point to pixels; raises behind the camera."""
    x, y, z = np.asarray(p, dtype=np.float64)
    if z <= 0:
        raise BehindCameraError(f"point has non-positive depth z={z}")
    return (k.fu * x / z + k.cx, k.fv * y / z + k.cy)


def transform_point(p, pose: Pose) -> np.ndarray:
    """Apply a rigid transform to one point."""
    return pose.rotation @ np.asarray(p, dtype=np.float64) + pose.translation


def transform_points(pts: np.ndarray, pose: Pose) -> np.ndarray:
    """Apply a rigid transform to an [N, 3] array of points."""
    return np.asarray(pts, dtype=np.float64) @ pose.rotation.T + pose.translation


def cart_to_polar(p) -> PolarPoint:
    """Cartesian (x, y, z) -> PolarPoint; phi := 0 on the degenerate ray."""
    x, y, z = np.asarray(p, dtype=np.float64)
    r = math.hypot(x, y)
    phi = math.atan2(y, x) if r > 0 else 0.0
    return PolarPoint(r=r, phi=phi, z=z)


def polar_to_cart(p: PolarPoint) -> np.ndarray:
    """PolarPoint -> Cartesian (x, y, z)."""
    return np.array([p.r * math.cos(p.phi), p.r * math.sin(p.phi), p.z])


def polar_of_points(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized (r, phi) of an [N, >=2] array; phi is 0 where r is 0."""
    pts = np.asarray(pts, dtype=np.float64)
    r = np.hypot(pts[:, 0], pts[:, 1])
    phi = np.where(r > 0, np.arctan2(pts[:, 1], pts[:, 0]), 0.0)
    return r, phi


# Unit-box corner signs, ordered bottom face then top face, CCW from (+l, +w).
_CORNER_SIGNS = np.array(
    [
        [+1, +1, -1],
        [+1, -1, -1],
        [-1, -1, -1],
        [-1, +1, -1],
        [+1, +1, +1],
        [+1, -1, +1],
        [-1, -1, +1],
        [-1, +1, +1],
    ],
    dtype=np.float64,
)


def box_corners(b: BBox3D) -> np.ndarray:
    """Eight corners [8, 3] of the yaw-rotated box in the vehicle frame."""
    w, l, h = b.dims
    local = _CORNER_SIGNS * (0.5 * np.array([l, w, h]))
    c, s = math.cos(b.yaw), math.sin(b.yaw)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return local @ rot.T + b.center


def points_in_box(pts: np.ndarray, b: BBox3D, inflate: float = 0.0) -> np.ndarray:
    """Boolean mask of [N, 3] points inside the (optionally inflated) box."""
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 3)
    rel = pts - b.center
    c, s = math.cos(b.yaw), math.sin(b.yaw)
    along = rel[:, 0] * c + rel[:, 1] * s
    across = -rel[:, 0] * s + rel[:, 1] * c
    w, l, h = b.dims
    return (
        (np.abs(along) <= 0.5 * l + inflate)
        & (np.abs(across) <= 0.5 * w + inflate)
        & (np.abs(rel[:, 2]) <= 0.5 * h + inflate)
    )
