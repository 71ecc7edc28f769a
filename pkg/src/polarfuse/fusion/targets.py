"""Training target assignment for the fusion heads.

Proposals match their nearest same-class ground-truth box within 4 m (BEV
center distance). A proposal "has valid radar" when at least one of its
associated points lies inside that box; only then do the regression terms
(offsets, center-ness, speed) contribute to the loss.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..association import AssociationSet
from ..geometry import BBox3D, cart_to_polar, points_in_box, wrap_angle
from ..proposals import ImageProposal
from .heads import COORD_CARTESIAN, COORD_POLAR

MATCH_DIST = 4.0


@dataclass
class TrainingTargets:
    has_valid_radar: np.ndarray          # [M] bool, the loss gate
    in_box_labels: list[np.ndarray]      # per proposal, aligned with assoc entries
    gt_offsets: np.ndarray               # [M, 2] (dr, dphi) or (dx, dy); zero if ungated
    gt_centerness: np.ndarray            # [M] in [0, 1]
    gt_speed: np.ndarray                 # [M] signed speed along gt heading
    matched_gt: list[int | None]


def match_for_training(
    proposals: list[ImageProposal],
    gt_boxes: list[BBox3D],
    gt_classes: list[int],
    max_dist: float = MATCH_DIST,
) -> list[int | None]:
    """Nearest gt of the proposal's class within max_dist BEV distance."""
    out: list[int | None] = []
    classes = np.asarray(gt_classes)
    centers = np.array([b.center[:2] for b in gt_boxes]) if gt_boxes else np.zeros((0, 2))
    for prop in proposals:
        mask = classes == prop.class_id if len(gt_boxes) else np.zeros(0, dtype=bool)
        cand = np.flatnonzero(mask)
        if len(cand) == 0:
            out.append(None)
            continue
        d = np.hypot(centers[cand, 0] - prop.box.center[0],
                     centers[cand, 1] - prop.box.center[1])
        j = int(np.argmin(d))
        out.append(int(cand[j]) if d[j] <= max_dist else None)
    return out


def centerness_target(prop_center: np.ndarray, gt: BBox3D) -> float:
    """Cube root of the min/max face-distance ratios along the three box axes."""
    rel = np.asarray(prop_center, dtype=np.float64) - gt.center
    c, s = math.cos(gt.yaw), math.sin(gt.yaw)
    along = rel[0] * c + rel[1] * s
    across = -rel[0] * s + rel[1] * c
    w, l, h = gt.dims
    ratios = []
    for offset, half in ((along, 0.5 * l), (across, 0.5 * w), (rel[2], 0.5 * h)):
        near = half - abs(offset)
        far = half + abs(offset)
        ratios.append(max(near, 0.0) / far)
    value = (ratios[0] * ratios[1] * ratios[2]) ** (1.0 / 3.0)
    return min(max(value, 0.0), 1.0)


def offset_target(prop_center: np.ndarray, gt_center: np.ndarray,
                  coord_mode: str) -> np.ndarray:
    if coord_mode == COORD_POLAR:
        pp = cart_to_polar(prop_center)
        pg = cart_to_polar(gt_center)
        return np.array([pg.r - pp.r, wrap_angle(pg.phi - pp.phi)])
    if coord_mode == COORD_CARTESIAN:
        return np.array([gt_center[0] - prop_center[0], gt_center[1] - prop_center[1]])
    raise ValueError(f"unknown coordinate mode {coord_mode!r}")


def compute_targets(
    proposals: list[ImageProposal],
    gt_boxes: list[BBox3D],
    gt_classes: list[int],
    assoc: AssociationSet,
    positions: np.ndarray,
    coord_mode: str = COORD_POLAR,
) -> TrainingTargets:
    m = len(proposals)
    matched = match_for_training(proposals, gt_boxes, gt_classes)
    has_valid = np.zeros(m, dtype=bool)
    in_box_labels: list[np.ndarray] = []
    offsets = np.zeros((m, 2))
    cness = np.zeros(m)
    speed = np.zeros(m)
    for i, (prop, gt_idx) in enumerate(zip(proposals, matched)):
        idx = assoc.entries[i]
        if gt_idx is None:
            in_box_labels.append(np.zeros(len(idx)))
            continue
        gt = gt_boxes[gt_idx]
        labels = (points_in_box(positions[idx], gt).astype(np.float64)
                  if len(idx) else np.zeros(0))
        in_box_labels.append(labels)
        has_valid[i] = bool(labels.sum() > 0)
        if has_valid[i]:
            offsets[i] = offset_target(prop.box.center, gt.center, coord_mode)
            cness[i] = centerness_target(prop.box.center, gt)
            heading = np.array([math.cos(gt.yaw), math.sin(gt.yaw)])
            speed[i] = float(gt.velocity @ heading)
    return TrainingTargets(
        has_valid_radar=has_valid,
        in_box_labels=in_box_labels,
        gt_offsets=offsets,
        gt_centerness=cness,
        gt_speed=speed,
        matched_gt=matched,
    )
