"""Spatio-contextual fusion: backbone, encoders, heads, targets, losses."""

from .backbone import BackboneConfig, RadarBackbone, StageConfig, ball_query_neighbors
from .encoders import I2REncoder, Mlp, PositionalEmbed, R2IEncoder
from .heads import (
    COORD_CARTESIAN,
    COORD_POLAR,
    DetectionHeads,
    FusionOutput,
    HeadOutputs,
    decode_and_score,
    detection_heads_forward,
)
from .losses import LossBreakdown, compute_losses
from .model import FrameInputs, FusionArchConfig, FusionModel, ProposalForward, desk_arch
from .patches import PatchConfig, adaptive_patch_size, extract_patch, extract_patches, patch_size_floor
from .targets import TrainingTargets, centerness_target, compute_targets, match_for_training

__all__ = [
    "BackboneConfig", "RadarBackbone", "StageConfig", "ball_query_neighbors",
    "I2REncoder", "R2IEncoder", "Mlp", "PositionalEmbed",
    "COORD_POLAR", "COORD_CARTESIAN", "DetectionHeads", "FusionOutput",
    "HeadOutputs", "decode_and_score", "detection_heads_forward",
    "LossBreakdown", "compute_losses",
    "FrameInputs", "FusionArchConfig", "FusionModel", "ProposalForward", "desk_arch",
    "PatchConfig", "adaptive_patch_size", "extract_patch", "extract_patches",
    "patch_size_floor",
    "TrainingTargets", "centerness_target", "compute_targets", "match_for_training",
]
