"""Shared per-frame plumbing: radar preparation, association, camera
projections, and decoding model outputs into detections."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..association import AssociationSet, baseline_associate, soft_polar_associate
from ..config import RunConfig
from ..detections import SOURCE_CAMERA, Detection
from ..fusion.heads import decode_and_score
from ..fusion.model import OFFSCREEN, FrameInputs, FusionModel
from ..geometry import points_in_box
from ..proposals import ImageProposal
from ..radar import FeatureStats, PreparedRadar, accumulate_sweeps, prepare_radar_input
from ..simulator import Camera, FrameData


def frame_seed(base_seed: int, index: int, salt: int = 0) -> int:
    return (base_seed * 1_000_003 + index * 7919 + salt) % (2**31 - 1)


def project_points_to_cameras(positions: np.ndarray, cameras: list[Camera],
                              stride: int) -> np.ndarray:
    """Feature-map-scale pixel coordinates [n_cams, K, 2]; points behind a
    camera land far off-screen so sampled patches are exactly zero."""
    k = positions.shape[0]
    out = np.full((len(cameras), k, 2), OFFSCREEN, dtype=np.float64)
    for ci, cam in enumerate(cameras):
        inv = cam.pose.inverse()
        cam_pts = positions @ inv.rotation.T + inv.translation
        ahead = cam_pts[:, 2] > 0.1
        z = np.where(ahead, cam_pts[:, 2], 1.0)
        u = cam.intrinsics.fu * cam_pts[:, 0] / z + cam.intrinsics.cx
        v = cam.intrinsics.fv * cam_pts[:, 1] / z + cam.intrinsics.cy
        out[ci, ahead, 0] = u[ahead] / stride
        out[ci, ahead, 1] = v[ahead] / stride
    return out


@dataclass
class PreparedFrame:
    frame: FrameData
    prepared: PreparedRadar
    assoc: AssociationSet
    inputs: FrameInputs
    gt_point_counts: np.ndarray       # in-range accumulated points inside each gt box


def associate_for_config(cfg: RunConfig, proposals: list[ImageProposal],
                         positions: np.ndarray, method: str | None = None) -> AssociationSet:
    method = method or cfg.association.method
    if method == "spa":
        return soft_polar_associate(proposals, positions, cfg.association.spa_config())
    if method in ("ball", "ball_query"):
        return baseline_associate("ball_query", proposals, positions,
                                  radius=cfg.association.ball_radius,
                                  k_prime=cfg.association.k_prime)
    if method == "roipool":
        return baseline_associate("roipool", proposals, positions,
                                  k_prime=cfg.association.k_prime)
    raise ValueError(f"unknown association method {method!r}")


def prepare_frame(
    frame: FrameData,
    cfg: RunConfig,
    seed: int,
    n_sweeps: int | None = None,
    stats: FeatureStats | None = None,
    associator: str | None = None,
    coord_mode: str | None = None,
) -> PreparedFrame:
    n_sweeps = n_sweeps if n_sweeps is not None else cfg.radar.n_sweeps
    n_sweeps = min(n_sweeps, len(frame.sweeps))
    reference = frame.scene.ego_trajectory[0][1]
    accumulated = accumulate_sweeps(frame.sweeps, reference, n_sweeps)
    if stats is None:
        stats = cfg.radar.stats() or FeatureStats.from_points(accumulated)
    prepared = prepare_radar_input(accumulated, cfg.radar.max_range,
                                   cfg.radar.k_max, stats,
                                   frame_seed(seed, frame.index, salt=1))
    if prepared.valid.any():
        assoc = associate_for_config(cfg, frame.proposals, prepared.positions,
                                     associator)
    else:
        assoc = AssociationSet(entries=[np.zeros(0, dtype=np.int64)
                                        for _ in frame.proposals])
    stride = frame.scene.cameras[0].width // frame.feature_maps[0].shape[1] \
        if frame.feature_maps else 1
    point_xy = project_points_to_cameras(prepared.positions, frame.scene.cameras,
                                         stride)
    inputs = FrameInputs(
        positions=prepared.positions,
        features=prepared.features,
        valid=prepared.valid,
        proposals=frame.proposals,
        feature_maps=frame.feature_maps,
        point_feat_xy=point_xy,
        coord_mode=coord_mode or cfg.fusion.coord_mode,
    )
    counts = np.zeros(len(frame.scene.gt_boxes), dtype=np.int64)
    if accumulated:
        pos = np.array([p.position for p in accumulated])
        in_range = np.hypot(pos[:, 0], pos[:, 1]) <= cfg.radar.max_range
        for gi, box in enumerate(frame.scene.gt_boxes):
            counts[gi] = int(points_in_box(pos[in_range], box).sum())
    return PreparedFrame(frame=frame, prepared=prepared, assoc=assoc,
                         inputs=inputs, gt_point_counts=counts)


def camera_only_detections(proposals: list[ImageProposal]) -> list[Detection]:
    return [Detection(box=p.box, score=p.score_3d(), class_id=p.class_id,
                      source=SOURCE_CAMERA) for p in proposals]


def fused_detections(model: FusionModel, pf: PreparedFrame,
                     threshold: float, coord_mode: str) -> list[Detection]:
    forwards = model.forward_frame(pf.inputs, pf.assoc)
    dets = []
    for prop, fwd in zip(pf.frame.proposals, forwards):
        out = fwd.head.to_fusion_output() if len(fwd.assoc_idx) else None
        dets.append(decode_and_score(prop, out, threshold, coord_mode))
    return dets
