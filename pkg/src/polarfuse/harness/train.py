"""End-to-end fusion training against a frozen proposal generator.

Per frame: accumulate a (possibly randomly reduced) number of sweeps,
prepare the radar input, apply augmentations, run the fusion forward pass,
and take one optimizer step under a cosine-annealed learning rate.

Augmentation contract: radar-only rigid jitter (rotation / scale / flip)
perturbs the backbone inputs before feature extraction; association,
targets, and the polar geometry stream instead see one rigid transform
applied identically to proposals, radar points, and ground truth.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..config import RunConfig
from ..errors import TrainingDiverged
from ..fusion.losses import compute_losses
from ..fusion.model import FrameInputs, FusionModel
from ..fusion.targets import compute_targets
from ..geometry import BBox3D, wrap_angle
from ..proposals import ImageProposal
from ..radar import FeatureStats, accumulate_sweeps
from ..simulator import FrameData
from ..tensorcore import AdamW, backward, clip_global_norm, cosine_lr, save_tensors
from .pipeline import associate_for_config, prepare_frame

COORD_FLAG_KEY = "__meta__/cartesian"
STATS_MEAN_KEY = "__meta__/stats_mean"
STATS_STD_KEY = "__meta__/stats_std"


@dataclass(frozen=True)
class RigidAug:
    """Planar rigid map p' = R(angle) @ F @ p + t, with F an optional y-flip."""

    angle: float = 0.0
    translation: tuple[float, float] = (0.0, 0.0)
    flip: bool = False
    scale: float = 1.0

    def apply_points(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64).copy()
        xy = pts[:, :2] * self.scale
        if self.flip:
            xy = xy * np.array([1.0, -1.0])
        c, s = math.cos(self.angle), math.sin(self.angle)
        rot = np.array([[c, -s], [s, c]])
        pts[:, :2] = xy @ rot.T + np.asarray(self.translation)
        return pts

    def apply_vec2(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        if self.flip:
            v = v * np.array([1.0, -1.0])
        c, s = math.cos(self.angle), math.sin(self.angle)
        return v @ np.array([[c, -s], [s, c]]).T

    def apply_yaw(self, yaw: float) -> float:
        return float(wrap_angle(self.angle + (-yaw if self.flip else yaw)))

    def apply_box(self, box: BBox3D) -> BBox3D:
        center = self.apply_points(box.center[None])[0]
        return BBox3D(center=center, dims=box.dims.copy(),
                      yaw=self.apply_yaw(box.yaw),
                      velocity=self.apply_vec2(box.velocity))

    def apply_proposal(self, prop: ImageProposal) -> ImageProposal:
        return ImageProposal(
            box=self.apply_box(prop.box), depth_var=prop.depth_var,
            class_conf=prop.class_conf, class_id=prop.class_id,
            feature=prop.feature, keypoint=prop.keypoint, camera_id=prop.camera_id)


def resolve_stats(cfg: RunConfig, frames: list[FrameData],
                  max_frames: int = 50) -> FeatureStats:
    """Config-provided stats, else stats of the corpus' accumulated points."""
    stats = cfg.radar.stats()
    if stats is not None:
        return stats
    points = []
    for frame in frames[:max_frames]:
        points.extend(accumulate_sweeps(frame.sweeps,
                                        frame.scene.ego_trajectory[0][1],
                                        min(cfg.radar.n_sweeps, len(frame.sweeps))))
    return FeatureStats.from_points(points)


@dataclass
class TrainResult:
    model: FusionModel
    stats: FeatureStats
    epoch_losses: list[dict[str, float]]
    checkpoint_path: Path | None


def save_checkpoint(path: str | Path, model: FusionModel, stats: FeatureStats,
                    coord_mode: str):
    state = model.state_dict()
    state[COORD_FLAG_KEY] = np.array([1.0 if coord_mode == "cartesian" else 0.0])
    state[STATS_MEAN_KEY] = stats.mean
    state[STATS_STD_KEY] = stats.std
    save_tensors(state, path)


def _dump_divergence(dump_path: Path, payload: dict):
    dump_path.write_text(json.dumps(payload, indent=2))


def run_training(
    cfg: RunConfig,
    frames,
    seed: int,
    checkpoint_path: str | Path | None = None,
    loss_csv_path: str | Path | None = None,
    coord_mode: str | None = None,
    epochs: int | None = None,
) -> TrainResult:
    """Train the fusion model on a corpus (a list of frames or a scene file)."""
    if isinstance(frames, (str, Path)):
        from ..sceneio import load_frames
        frames = load_frames(frames)
    coord = coord_mode or cfg.fusion.coord_mode
    epochs = epochs if epochs is not None else cfg.training.epochs
    model = FusionModel(cfg.fusion.arch(cfg.simulator.n_classes), seed)
    stats = resolve_stats(cfg, frames)
    opt = AdamW(model.parameters(), lr=cfg.training.lr,
                weight_decay=cfg.training.weight_decay)
    rng = np.random.default_rng(seed)
    total_steps = max(epochs * len(frames), 1)
    tcfg = cfg.training
    step = 0
    epoch_losses: list[dict[str, float]] = []
    for epoch in range(epochs):
        order = rng.permutation(len(frames))
        terms = {"loss": [], "point_bce": [], "fusion_bce": [],
                 "centerness_bce": [], "offset_l1": [], "speed_l1": []}
        for fi in order:
            frame = frames[fi]
            if tcfg.augment:
                n_sweeps = int(rng.integers(tcfg.min_sweeps, cfg.radar.n_sweeps + 1))
            else:
                n_sweeps = cfg.radar.n_sweeps
            pf = prepare_frame(frame, cfg, seed, n_sweeps=n_sweeps, stats=stats,
                               coord_mode=coord)
            gt_boxes = frame.scene.gt_boxes
            gt_classes = frame.scene.gt_classes
            proposals = frame.proposals
            inputs = pf.inputs
            assoc = pf.assoc
            positions = pf.prepared.positions
            if tcfg.augment:
                radar_aug = RigidAug(
                    angle=float(rng.uniform(-tcfg.aug_radar_rotation_max,
                                            tcfg.aug_radar_rotation_max)),
                    translation=(float(rng.normal(0, 0.2)), float(rng.normal(0, 0.2))),
                    flip=bool(rng.uniform() < tcfg.aug_flip_prob),
                    scale=float(1.0 + rng.normal(0, tcfg.aug_radar_scale_sigma)),
                )
                joint = RigidAug(
                    angle=float(rng.uniform(-tcfg.aug_rotation_max,
                                            tcfg.aug_rotation_max)),
                    translation=tuple(rng.normal(0, tcfg.aug_translation_sigma, 2)),
                    flip=bool(rng.uniform() < tcfg.aug_flip_prob),
                )
                backbone_positions = radar_aug.apply_points(positions)
                raw = pf.prepared.raw_features.copy()
                raw[:, 1:3] = radar_aug.apply_vec2(raw[:, 1:3])
                backbone_features = (raw - stats.mean) / stats.std
                backbone_features[~pf.prepared.valid] = 0.0
                positions = joint.apply_points(positions)
                proposals = [joint.apply_proposal(p) for p in proposals]
                gt_boxes = [joint.apply_box(b) for b in gt_boxes]
                if pf.prepared.valid.any():
                    assoc = associate_for_config(cfg, proposals, positions)
                inputs = FrameInputs(
                    positions=positions,
                    features=pf.prepared.features,
                    valid=pf.prepared.valid,
                    proposals=proposals,
                    feature_maps=frame.feature_maps,
                    point_feat_xy=pf.inputs.point_feat_xy,
                    backbone_positions=backbone_positions,
                    backbone_features=backbone_features,
                    coord_mode=coord,
                )
            if not proposals:
                step += 1
                continue
            forwards = model.forward_frame(inputs, assoc)
            targets = compute_targets(proposals, gt_boxes, gt_classes, assoc,
                                      positions, coord)
            breakdown = compute_losses([f.head for f in forwards],
                                       [f.in_box_logits for f in forwards], targets)
            loss_value = breakdown.scalar()
            if not math.isfinite(loss_value):
                dump = Path(checkpoint_path or "training").with_suffix(".divergence.json")
                _dump_divergence(dump, {
                    "epoch": epoch, "frame_index": int(frame.index), "step": step,
                    "loss": loss_value, "point_bce": breakdown.point_bce,
                    "fusion_bce": breakdown.fusion_bce,
                    "n_proposals": breakdown.n_proposals,
                })
                raise TrainingDiverged(
                    f"non-finite loss {loss_value} at epoch {epoch}, "
                    f"frame {frame.index}; diagnostics in {dump}", str(dump))
            opt.zero_grad()
            backward(breakdown.total)
            clip_global_norm(model.parameters(), tcfg.clip_norm)
            opt.step(lr=cosine_lr(step, total_steps, tcfg.lr))
            step += 1
            terms["loss"].append(loss_value)
            terms["point_bce"].append(breakdown.point_bce)
            terms["fusion_bce"].append(breakdown.fusion_bce)
            terms["centerness_bce"].append(breakdown.centerness_bce)
            terms["offset_l1"].append(breakdown.offset_l1)
            terms["speed_l1"].append(breakdown.speed_l1)
        epoch_losses.append({k: (float(np.mean(v)) if v else 0.0)
                             for k, v in terms.items()})
    ckpt = None
    if checkpoint_path is not None:
        ckpt = Path(checkpoint_path)
        save_checkpoint(ckpt, model, stats, coord)
    if loss_csv_path is not None:
        keys = ["loss", "point_bce", "fusion_bce", "centerness_bce",
                "offset_l1", "speed_l1"]
        lines = ["epoch," + ",".join(keys)]
        for e, row in enumerate(epoch_losses):
            lines.append(f"{e}," + ",".join(repr(row[k]) for k in keys))
        Path(loss_csv_path).write_text("\n".join(lines) + "\n")
    return TrainResult(model=model, stats=stats, epoch_losses=epoch_losses,
                       checkpoint_path=ckpt)


def load_checkpoint(path: str | Path, cfg: RunConfig) -> tuple[FusionModel, FeatureStats, str]:
    """Restore a trained model plus the stats/coordinate mode it was trained with."""
    from ..tensorcore import load_tensors

    state = load_tensors(path)
    coord = "cartesian" if state.pop(COORD_FLAG_KEY, np.zeros(1))[0] > 0.5 else "polar"
    mean = state.pop(STATS_MEAN_KEY, None)
    std = state.pop(STATS_STD_KEY, None)
    stats = FeatureStats(mean, std) if mean is not None and std is not None \
        else FeatureStats.identity()
    model = FusionModel(cfg.fusion.arch(cfg.simulator.n_classes), seed=0)
    model.load_state_dict(state)
    return model, stats, coord
