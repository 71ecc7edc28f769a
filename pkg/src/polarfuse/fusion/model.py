"""Fusion model assembly: radar backbone, both encoders, detection heads,
and a per-frame forward pass over associated proposal/point sets."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import tensorcore as tc
from ..association import AssociationSet
from ..geometry import cart_to_polar, polar_of_points, wrap_angle
from ..proposals import ImageProposal
from ..radar import N_POINT_FEATURES
from ..tensorcore import Parameter
from .backbone import BackboneConfig, RadarBackbone, StageConfig
from .encoders import I2REncoder, R2IEncoder
from .heads import COORD_POLAR, DetectionHeads, HeadOutputs
from .patches import PatchConfig, adaptive_patch_sizes, extract_patches

# Projection sentinel for radar points behind a camera: far enough outside
# any feature map that every sampled patch is exactly zero.
OFFSCREEN = -1e6


@dataclass(frozen=True)
class FusionArchConfig:
    width: int = 64            # feature width C
    heads: int = 8
    layers: int = 4            # depth of each encoder
    mlp_hidden: int = 256
    n_points: int = 4          # deformable sampling points
    n_classes: int = 4
    patch: PatchConfig = field(default_factory=PatchConfig)
    backbone: BackboneConfig = field(default_factory=BackboneConfig)

    def __post_init__(self):
        if self.width % self.heads != 0:
            raise ValueError(f"width {self.width} not divisible by heads {self.heads}")
        if self.backbone.out_channels != self.width:
            raise ValueError(
                f"backbone ends at {self.backbone.out_channels} channels, "
                f"fusion width is {self.width}")


@dataclass
class FrameInputs:
    """Everything one frame contributes to the fusion forward pass.

    positions feed association/polar geometry; backbone_positions/features
    may differ from them when radar-only augmentation is active.
    """

    positions: np.ndarray              # [K, 3]
    features: np.ndarray               # [K, F] normalized
    valid: np.ndarray                  # [K] bool
    proposals: list[ImageProposal]
    feature_maps: list[np.ndarray]     # per camera [h, w, C]
    point_feat_xy: np.ndarray          # [n_cams, K, 2] feature-scale projections
    backbone_positions: np.ndarray | None = None
    backbone_features: np.ndarray | None = None
    coord_mode: str = COORD_POLAR


@dataclass
class ProposalForward:
    head: HeadOutputs
    in_box_logits: tc.Tensor           # [n_assoc]
    assoc_idx: np.ndarray


class FusionModel:
    def __init__(self, arch: FusionArchConfig, seed: int = 0):
        self.arch = arch
        rng = np.random.default_rng(seed)
        self.backbone = RadarBackbone(rng, arch.backbone, N_POINT_FEATURES)
        self.i2r = I2REncoder(rng, arch.width, arch.heads, arch.layers,
                              arch.mlp_hidden, arch.n_points)
        self.r2i = R2IEncoder(rng, arch.width, arch.heads, arch.layers,
                              arch.mlp_hidden)
        self.heads = DetectionHeads(rng, arch.width, arch.mlp_hidden, arch.n_classes)

    def parameters(self) -> list[Parameter]:
        return (self.backbone.parameters() + self.i2r.parameters()
                + self.r2i.parameters() + self.heads.parameters())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {p.name: p.data.copy() for p in self.parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        for p in self.parameters():
            if p.name not in state:
                raise KeyError(f"checkpoint is missing parameter {p.name}")
            arr = np.asarray(state[p.name], dtype=np.float64)
            if arr.shape != p.data.shape:
                raise ValueError(
                    f"{p.name}: checkpoint shape {arr.shape} != model {p.data.shape}")
            p.data[...] = arr

    def encode_radar(self, positions: np.ndarray, features: np.ndarray) -> tc.Tensor:
        return self.backbone.forward(positions, tc.constant(features))

    def forward_frame(self, inputs: FrameInputs, assoc: AssociationSet) -> list[ProposalForward]:
        bpos = inputs.backbone_positions if inputs.backbone_positions is not None \
            else inputs.positions
        bfeat = inputs.backbone_features if inputs.backbone_features is not None \
            else inputs.features
        radar_feats = self.encode_radar(bpos, bfeat)
        r_all, phi_all = polar_of_points(inputs.positions)
        encoded_all, logits_all, row_ranges = self._encode_pairs(
            inputs, assoc, radar_feats, r_all)

        out: list[ProposalForward] = []
        for m, prop in enumerate(inputs.proposals):
            idx = assoc.entries[m]
            lo, hi = row_ranges[m]
            encoded = tc.take_rows(encoded_all, np.arange(lo, hi)) if hi > lo \
                else tc.constant(np.zeros((0, self.arch.width)))
            logits = tc.take_rows(logits_all, np.arange(lo, hi)) if hi > lo \
                else tc.constant(np.zeros(0))
            rel = self._relative_coords(prop, idx, r_all, phi_all, inputs)
            refined = self.r2i.forward(tc.constant(prop.feature), encoded, rel)
            head = self.heads.forward(refined, prop.class_id)
            out.append(ProposalForward(head=head, in_box_logits=logits, assoc_idx=idx))
        return out

    def _encode_pairs(self, inputs: FrameInputs, assoc: AssociationSet,
                      radar_feats: tc.Tensor, r_all: np.ndarray):
        """One image-to-radar pass over every (proposal, associated point) pair.

        Pairs keep proposal order, so each proposal owns a contiguous row
        range of the stacked outputs. Patches are extracted per camera.
        """
        cams = []
        points = []
        row_ranges = []
        cursor = 0
        for m, prop in enumerate(inputs.proposals):
            idx = assoc.entries[m]
            row_ranges.append((cursor, cursor + len(idx)))
            cursor += len(idx)
            cams.extend([prop.camera_id] * len(idx))
            points.extend(int(i) for i in idx)
        n = cursor
        if n == 0:
            empty = tc.constant(np.zeros((0, self.arch.width)))
            return empty, tc.constant(np.zeros(0)), row_ranges
        cams = np.asarray(cams)
        points = np.asarray(points)
        taus = adaptive_patch_sizes(r_all[points], self.arch.patch)
        out_size = self.arch.patch.out_size
        patch_groups = []
        group_rows = []
        for cam_id in range(len(inputs.feature_maps)):
            rows = np.flatnonzero(cams == cam_id)
            if len(rows) == 0:
                continue
            centers = inputs.point_feat_xy[cam_id, points[rows]]
            patch_groups.append(extract_patches(
                tc.constant(inputs.feature_maps[cam_id]), centers, taus[rows],
                out_size))
            group_rows.append(rows)
        patches = patch_groups[0] if len(patch_groups) == 1 \
            else tc.concat(patch_groups, axis=0)
        grouped_order = np.concatenate(group_rows)
        # Scatter grouped rows back to pair order.
        inverse = np.empty(n, dtype=np.int64)
        inverse[grouped_order] = np.arange(n)
        patches = tc.take_rows(patches, inverse)
        pair_feats = tc.take_rows(radar_feats, points)
        refs = np.full((n, 2), (out_size - 1) / 2.0)
        encoded, logits = self.i2r.forward(pair_feats, patches, refs)
        return encoded, logits, row_ranges

    def _relative_coords(self, prop, idx, r_all, phi_all, inputs) -> np.ndarray:
        if len(idx) == 0:
            return np.zeros((0, 2))
        if inputs.coord_mode == COORD_POLAR:
            pol = cart_to_polar(prop.box.center)
            return np.stack([r_all[idx] - pol.r,
                             wrap_angle(phi_all[idx] - pol.phi)], axis=1)
        return inputs.positions[idx, :2] - prop.box.center[:2]


def desk_arch(width: int = 32, heads: int = 4, layers: int = 2,
              mlp_hidden: int = 64, n_points: int = 4, n_classes: int = 4,
              backbone_stages: tuple = ((1.5, 4, (16, 32)), (3.0, 4, (32, 32))),
              patch: PatchConfig | None = None) -> FusionArchConfig:
    """Small architecture for tests; stage tuples are (radius, nsample, channels)."""
    stages = tuple(StageConfig(r, n, tuple(ch)) for r, n, ch in backbone_stages)
    if stages[-1].channels[-1] != width:
        raise ValueError("last backbone stage must end at the fusion width")
    return FusionArchConfig(
        width=width, heads=heads, layers=layers, mlp_hidden=mlp_hidden,
        n_points=n_points, n_classes=n_classes,
        patch=patch if patch is not None else PatchConfig(),
        backbone=BackboneConfig(stages=stages),
    )
