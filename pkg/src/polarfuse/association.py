"""Associating radar points with image proposals.

The primary associator windows points in polar coordinates: azimuth must
fall strictly between the leftmost/rightmost corner azimuths of the
proposal box, and range strictly inside [front corner - s, back corner + s]
with slack s = gamma + depth_var * r_center / delta. Two baselines
(footprint RoI pooling and a fixed-radius BEV ball query) are provided for
comparison, along with the recall/clutter diagnostics used to rank them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import BBox3D, box_corners, polar_of_points, wrap_angle
from .proposals import ImageProposal

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class AssociationConfig:
    gamma: float = 5.0     # minimum radial slack (m)
    delta: float = 10.0    # slack modulation divisor
    k_prime: int = 128     # cap on associated points per proposal

    def __post_init__(self):
        if self.gamma < 0 or self.delta <= 0 or self.k_prime < 1:
            raise ValueError(f"invalid association config {self}")


@dataclass
class AssociationSet:
    """Per-proposal arrays of associated point indices (each <= k_prime)."""

    entries: list[np.ndarray]

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class PolarBounds:
    """Corner-derived polar window of one proposal."""

    r_front: float
    r_back: float
    phi_left: float
    phi_right: float
    full_circle: bool

    @property
    def r_center(self) -> float:
        return 0.5 * (self.r_front + self.r_back)


def proposal_polar_bounds(box: BBox3D) -> PolarBounds:
    """Min/max corner radii and the wrapped azimuth interval of the corners.

    Azimuth deltas are measured from the center azimuth; an extent above pi
    (a box wrapping around the ego) degenerates to the full circle.
    """
    corners = box_corners(box)
    r, phi = polar_of_points(corners)
    ref = math.atan2(box.center[1], box.center[0])
    deltas = wrap_angle(phi - ref)
    lo, hi = float(np.min(deltas)), float(np.max(deltas))
    return PolarBounds(
        r_front=float(np.min(r)),
        r_back=float(np.max(r)),
        phi_left=float(wrap_angle(ref + lo)),
        phi_right=float(wrap_angle(ref + hi)),
        full_circle=(hi - lo) > math.pi,
    )


def _point_positions(points) -> np.ndarray:
    if isinstance(points, np.ndarray):
        return points.reshape(-1, 3).astype(np.float64)
    return np.array([p.position for p in points], dtype=np.float64).reshape(-1, 3)


def _truncate(cand: np.ndarray, r: np.ndarray, r_center: float, k_prime: int) -> np.ndarray:
    if len(cand) <= k_prime:
        return cand
    order = np.argsort(np.abs(r[cand] - r_center), kind="stable")
    return cand[order[:k_prime]]


def soft_polar_associate(
    proposals: list[ImageProposal],
    points,
    cfg: AssociationConfig,
) -> AssociationSet:
    """Window points per proposal in polar coordinates, capped at k_prime.

    Truncation keeps the points radially closest to the proposal's center
    radius. Proposals with no points in the window get empty entries.
    """
    pos = _point_positions(points)
    r, phi = polar_of_points(pos)
    entries = []
    for prop in proposals:
        bounds = proposal_polar_bounds(prop.box)
        slack = cfg.gamma + prop.depth_var * bounds.r_center / cfg.delta
        radial_ok = (r > bounds.r_front - slack) & (r < bounds.r_back + slack)
        if bounds.full_circle:
            azim_ok = np.ones_like(radial_ok)
        else:
            rel = (phi - bounds.phi_left) % TWO_PI
            span = (bounds.phi_right - bounds.phi_left) % TWO_PI
            azim_ok = (rel > 0) & (rel < span)
        cand = np.flatnonzero(radial_ok & azim_ok)
        entries.append(_truncate(cand, r, bounds.r_center, cfg.k_prime))
    return AssociationSet(entries=entries)


def baseline_associate(
    mode: str,
    proposals: list[ImageProposal],
    points,
    radius: float = 6.0,
    k_prime: int = 128,
) -> AssociationSet:
    """Table-style baselines: 'roipool' keeps points inside the proposal's
    BEV footprint; 'ball_query' keeps points within `radius` of its center."""
    if mode not in ("roipool", "ball_query"):
        raise ValueError(f"unknown baseline associator {mode!r}")
    if mode == "ball_query" and radius <= 0:
        raise ValueError(f"ball_query radius must be positive, got {radius}")
    pos = _point_positions(points)
    r, _ = polar_of_points(pos)
    entries = []
    for prop in proposals:
        box = prop.box
        if mode == "ball_query":
            d = np.hypot(pos[:, 0] - box.center[0], pos[:, 1] - box.center[1])
            mask = d <= radius
        else:
            rel = pos[:, :2] - box.center[:2]
            c, s = math.cos(box.yaw), math.sin(box.yaw)
            along = rel[:, 0] * c + rel[:, 1] * s
            across = -rel[:, 0] * s + rel[:, 1] * c
            w, l, _h = box.dims
            mask = (np.abs(along) <= 0.5 * l) & (np.abs(across) <= 0.5 * w)
        cand = np.flatnonzero(mask)
        entries.append(_truncate(cand, r, proposal_polar_bounds(box).r_center, k_prime))
    return AssociationSet(entries=entries)


def match_proposals_to_gt(
    proposals: list[ImageProposal],
    gt_boxes: list[BBox3D],
    max_dist: float = 4.0,
) -> list[int | None]:
    """Nearest ground-truth box (BEV center distance) within max_dist, else None."""
    if not gt_boxes:
        return [None] * len(proposals)
    centers = np.array([b.center[:2] for b in gt_boxes])
    out: list[int | None] = []
    for prop in proposals:
        d = np.hypot(centers[:, 0] - prop.box.center[0], centers[:, 1] - prop.box.center[1])
        j = int(np.argmin(d))
        out.append(j if d[j] <= max_dist else None)
    return out


def _in_matched_box(assoc_idx: np.ndarray, pos: np.ndarray, box: BBox3D) -> np.ndarray:
    from .geometry import points_in_box

    if len(assoc_idx) == 0:
        return np.zeros(0, dtype=bool)
    return points_in_box(pos[assoc_idx], box)


def association_recall_counts(
    assoc: AssociationSet,
    proposals: list[ImageProposal],
    points,
    gt_boxes: list[BBox3D],
    matches: list[int | None] | None = None,
) -> tuple[int, int]:
    """(hits, eligible) behind association_recall; summable across frames."""
    pos = _point_positions(points)
    if matches is None:
        matches = match_proposals_to_gt(proposals, gt_boxes)
    eligible = 0
    hit = 0
    for idx, prop, m in zip(assoc.entries, proposals, matches):
        if len(idx) == 0 or m is None:
            continue
        eligible += 1
        if bool(_in_matched_box(idx, pos, gt_boxes[m]).any()):
            hit += 1
    return hit, eligible


def valid_association_counts(
    assoc: AssociationSet,
    proposals: list[ImageProposal],
    points,
    gt_boxes: list[BBox3D],
    matches: list[int | None] | None = None,
) -> tuple[int, int]:
    """(valid, matched): proposals with a gt whose association hits that gt.

    Unlike association_recall, proposals whose association came back empty
    still count in the denominator, so an associator that fails to return
    anything is penalized rather than excluded.
    """
    pos = _point_positions(points)
    if matches is None:
        matches = match_proposals_to_gt(proposals, gt_boxes)
    matched = 0
    valid = 0
    for idx, prop, m in zip(assoc.entries, proposals, matches):
        if m is None:
            continue
        matched += 1
        if len(idx) and bool(_in_matched_box(idx, pos, gt_boxes[m]).any()):
            valid += 1
    return valid, matched


def association_recall(
    assoc: AssociationSet,
    proposals: list[ImageProposal],
    points,
    gt_boxes: list[BBox3D],
    matches: list[int | None] | None = None,
) -> float | None:
    """Fraction of eligible proposals whose association hits its gt box.

    Eligible means >= 1 associated point and a matched gt. Returns None when
    no proposal is eligible.
    """
    hit, eligible = association_recall_counts(assoc, proposals, points, gt_boxes,
                                              matches)
    if eligible == 0:
        return None
    return hit / eligible


def association_clutter_fractions(
    assoc: AssociationSet,
    proposals: list[ImageProposal],
    points,
    gt_boxes: list[BBox3D],
    matches: list[int | None] | None = None,
) -> list[float]:
    """Per eligible proposal: fraction of associated points outside its gt box."""
    pos = _point_positions(points)
    if matches is None:
        matches = match_proposals_to_gt(proposals, gt_boxes)
    fractions = []
    for idx, prop, m in zip(assoc.entries, proposals, matches):
        if len(idx) == 0 or m is None:
            continue
        inside = _in_matched_box(idx, pos, gt_boxes[m])
        fractions.append(1.0 - float(inside.mean()))
    return fractions


def association_clutter_fraction(
    assoc: AssociationSet,
    proposals: list[ImageProposal],
    points,
    gt_boxes: list[BBox3D],
    matches: list[int | None] | None = None,
) -> float | None:
    """Mean per-proposal fraction of associated points outside the matched gt box."""
    fractions = association_clutter_fractions(assoc, proposals, points, gt_boxes,
                                              matches)
    if not fractions:
        return None
    return float(np.mean(fractions))
