"""Evaluation and training harness."""

from .metrics import (
    ApResult,
    DetRecord,
    GtRecord,
    MetricsReport,
    match_and_ap,
    nms_bev,
    translation_velocity_errors,
)
from .pipeline import (
    PreparedFrame,
    associate_for_config,
    camera_only_detections,
    frame_seed,
    fused_detections,
    prepare_frame,
    project_points_to_cameras,
)
from .evaluate import EvalOutputs, evaluate_frames, run_evaluation
from .train import (
    RigidAug,
    TrainResult,
    load_checkpoint,
    resolve_stats,
    run_training,
    save_checkpoint,
)

__all__ = [
    "ApResult", "DetRecord", "GtRecord", "MetricsReport", "match_and_ap",
    "nms_bev", "translation_velocity_errors",
    "PreparedFrame", "associate_for_config", "camera_only_detections",
    "frame_seed", "fused_detections", "prepare_frame", "project_points_to_cameras",
    "EvalOutputs", "evaluate_frames", "run_evaluation",
    "RigidAug", "TrainResult", "load_checkpoint", "resolve_stats",
    "run_training", "save_checkpoint",
]
