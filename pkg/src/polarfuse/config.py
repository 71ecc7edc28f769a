"""Run configuration: dataclass sections mirroring the module layout,
loadable from a YAML file with the same section names."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .association import AssociationConfig
from .errors import ConfigError
from .fusion.backbone import BackboneConfig, StageConfig
from .fusion.heads import COORD_CARTESIAN, COORD_POLAR
from .fusion.model import FusionArchConfig
from .fusion.patches import PatchConfig
from .radar import FeatureStats
from .simulator import DEFAULT_CLASSES, SceneSpec, SensorModel


@dataclass(frozen=True)
class RadarSection:
    max_range: float = 55.0
    k_max: int = 256
    n_sweeps: int = 6
    feature_mean: tuple[float, ...] | None = None
    feature_std: tuple[float, ...] | None = None

    def stats(self) -> FeatureStats | None:
        if self.feature_mean is None or self.feature_std is None:
            return None
        return FeatureStats(self.feature_mean, self.feature_std)


@dataclass(frozen=True)
class AssociationSection:
    method: str = "spa"              # spa | ball | roipool
    gamma: float = 5.0
    delta: float = 10.0
    k_prime: int = 128
    ball_radius: float = 6.0

    def spa_config(self) -> AssociationConfig:
        return AssociationConfig(gamma=self.gamma, delta=self.delta, k_prime=self.k_prime)


@dataclass(frozen=True)
class FusionSection:
    width: int = 64
    heads: int = 8
    layers: int = 4
    mlp_hidden: int = 256
    n_points: int = 4
    coord_mode: str = COORD_POLAR
    fusion_threshold: float = 0.3
    patch_w_scale: float = 3.5
    patch_alpha: float = 2.0
    patch_beta: float = 55.0
    patch_out_size: int = 7
    backbone_stages: tuple = (
        (1.0, 4, (16, 16, 32)),
        (2.0, 4, (32, 32, 64)),
        (3.0, 8, (64, 64, 128)),
        (4.0, 8, (128, 128, 64)),
    )

    def __post_init__(self):
        if self.coord_mode not in (COORD_POLAR, COORD_CARTESIAN):
            raise ConfigError(f"unknown coord_mode {self.coord_mode!r}")

    def arch(self, n_classes: int) -> FusionArchConfig:
        stages = tuple(StageConfig(float(r), int(n), tuple(int(c) for c in ch))
                       for r, n, ch in self.backbone_stages)
        return FusionArchConfig(
            width=self.width, heads=self.heads, layers=self.layers,
            mlp_hidden=self.mlp_hidden, n_points=self.n_points,
            n_classes=n_classes,
            patch=PatchConfig(w_scale=self.patch_w_scale, alpha=self.patch_alpha,
                              beta=self.patch_beta, out_size=self.patch_out_size),
            backbone=BackboneConfig(stages=stages),
        )


@dataclass(frozen=True)
class SimulatorSection:
    count_ranges: tuple = ((2, 5), (0, 2), (1, 3), (0, 2))
    min_radius: float = 4.0
    max_radius: float = 53.0
    ego_speed_max: float = 8.0
    n_cameras: int = 4
    image_width: int = 200
    image_height: int = 112
    focal: float = 95.0
    feature_stride: int = 4
    sweep_period: float = 0.1
    max_proposals: int = 64
    sensor: SensorModel = field(default_factory=SensorModel)

    def scene_spec(self, n_sweeps: int) -> SceneSpec:
        mid_counts = tuple(int((lo + hi) // 2) for lo, hi in self.count_ranges)
        return SceneSpec(
            counts=mid_counts,
            classes=DEFAULT_CLASSES,
            min_radius=self.min_radius, max_radius=self.max_radius,
            ego_speed_max=self.ego_speed_max, n_cameras=self.n_cameras,
            image_width=self.image_width, image_height=self.image_height,
            focal=self.focal, feature_stride=self.feature_stride,
            n_sweeps=n_sweeps, sweep_period=self.sweep_period,
        )

    @property
    def n_classes(self) -> int:
        return len(DEFAULT_CLASSES)


@dataclass(frozen=True)
class TrainingSection:
    epochs: int = 6
    lr: float = 3e-3
    weight_decay: float = 1e-4
    clip_norm: float = 35.0
    augment: bool = True
    aug_rotation_max: float = 0.4      # rad, joint rigid rotation
    aug_translation_sigma: float = 0.5  # m
    aug_flip_prob: float = 0.5
    aug_radar_rotation_max: float = 0.2
    aug_radar_scale_sigma: float = 0.02
    min_sweeps: int = 3                # random sweep-count lower bound


@dataclass(frozen=True)
class EvalSection:
    ap_thresholds: tuple[float, ...] = (0.5, 1.0, 2.0, 4.0)
    tp_metric_threshold: float = 2.0
    nms_dist: float = 0.5
    error_match_dist: float = 4.0
    distance_bins: tuple = ((0.0, 20.0), (20.0, 35.0), (35.0, 55.0))
    point_count_bins: tuple = ((0, 0), (1, 2), (3, 5), (6, 10**9))
    min_recall: float = 0.1
    min_precision: float = 0.1


@dataclass(frozen=True)
class RunConfig:
    radar: RadarSection = field(default_factory=RadarSection)
    association: AssociationSection = field(default_factory=AssociationSection)
    fusion: FusionSection = field(default_factory=FusionSection)
    simulator: SimulatorSection = field(default_factory=SimulatorSection)
    training: TrainingSection = field(default_factory=TrainingSection)
    evalharness: EvalSection = field(default_factory=EvalSection)


def _coerce(value, target_type):
    if isinstance(value, list):
        return tuple(_coerce(v, None) for v in value)
    return value


def _build_section(cls, data: dict, name: str):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    known = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"unknown key {key!r} in section {name!r}")
        if key == "sensor":
            kwargs[key] = _build_section(SensorModel, value, f"{name}.sensor")
        else:
            kwargs[key] = _coerce(value, known[key].type)
    return cls(**kwargs)


def load_config(path: str | Path) -> RunConfig:
    raw = yaml.safe_load(Path(path).read_text()) or {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping of sections")
    sections = {
        "radar": RadarSection,
        "association": AssociationSection,
        "fusion": FusionSection,
        "simulator": SimulatorSection,
        "training": TrainingSection,
        "evalharness": EvalSection,
    }
    unknown = set(raw) - set(sections)
    if unknown:
        raise ConfigError(f"{path}: unknown sections {sorted(unknown)}")
    kwargs = {key: _build_section(cls, raw.get(key), key)
              for key, cls in sections.items()}
    return RunConfig(**kwargs)
