"""Category-specific regression heads and proposal decoding.

A shared MLP feeds one zero-initialized linear head per class producing
(fusion score logit, two location offsets, center-ness logit, speed).
Decoding applies the offsets in polar (or Cartesian, for the ablation)
coordinates when the fusion score clears the threshold, otherwise the
image proposal passes through untouched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import tensorcore as tc
from ..detections import SOURCE_CAMERA, SOURCE_FUSED, Detection
from ..errors import ConfigError
from ..geometry import BBox3D, cart_to_polar, wrap_angle
from ..proposals import ImageProposal
from ..tensorcore import Parameter
from .encoders import Mlp

COORD_POLAR = "polar"
COORD_CARTESIAN = "cartesian"


@dataclass(frozen=True)
class FusionOutput:
    """Decoded head predictions for one proposal.

    In Cartesian mode the two offsets are (dx, dy) instead of (dr, dphi).
    """

    fusion_score: float
    offset_r: float
    offset_phi: float
    centerness: float
    speed: float


@dataclass
class HeadOutputs:
    """Raw head tensors kept in the graph for the training loss."""

    score_logit: tc.Tensor      # [1]
    offset: tc.Tensor           # [2]
    centerness_logit: tc.Tensor  # [1]
    speed: tc.Tensor            # [1]

    def to_fusion_output(self) -> FusionOutput:
        def sig(v: float) -> float:
            return 1.0 / (1.0 + math.exp(-v))

        off = self.offset.data
        return FusionOutput(
            fusion_score=sig(float(self.score_logit.data[0])),
            offset_r=float(off[0]),
            offset_phi=float(off[1]),
            centerness=sig(float(self.centerness_logit.data[0])),
            speed=float(self.speed.data[0]),
        )


class DetectionHeads:
    N_OUTPUTS = 5  # score logit, two offsets, centerness logit, speed

    def __init__(self, rng, width: int, hidden: int, n_classes: int,
                 prefix: str = "heads"):
        self.n_classes = n_classes
        self.shared = Mlp.init(rng, width, hidden, f"{prefix}/shared", out=hidden)
        # Zero-initialized class heads: the untrained model refines nothing.
        self.class_heads = [
            (Parameter(np.zeros((hidden, self.N_OUTPUTS)), f"{prefix}/cls{c}/w"),
             Parameter(np.zeros(self.N_OUTPUTS), f"{prefix}/cls{c}/b"))
            for c in range(n_classes)
        ]

    def parameters(self) -> list[Parameter]:
        out = self.shared.parameters()
        for w, b in self.class_heads:
            out += [w, b]
        return out

    def forward(self, refined_feat: tc.Tensor, class_id: int) -> HeadOutputs:
        if not (0 <= class_id < self.n_classes):
            raise ConfigError(f"unknown class id {class_id} (have {self.n_classes})")
        h = tc.relu(self.shared(tc.reshape(refined_feat, (1, -1))))
        w, b = self.class_heads[class_id]
        out = tc.reshape(tc.linear(h, w, b), (self.N_OUTPUTS,))
        return HeadOutputs(
            score_logit=tc.take_last(out, 0, 1),
            offset=tc.take_last(out, 1, 3),
            centerness_logit=tc.take_last(out, 3, 4),
            speed=tc.take_last(out, 4, 5),
        )


def detection_heads_forward(refined_feat: tc.Tensor, class_id: int,
                            heads: DetectionHeads) -> FusionOutput:
    return heads.forward(refined_feat, class_id).to_fusion_output()


def decode_and_score(
    proposal: ImageProposal,
    out: FusionOutput | None,
    threshold: float = 0.3,
    coord_mode: str = COORD_POLAR,
) -> Detection:
    """Refine a proposal with its fusion output, or pass it through.

    Passthrough (no association, or fusion score below threshold) keeps the
    proposal box object itself and scores it with the depth-readjusted
    camera confidence. Refinement shifts the center by the predicted
    offsets, replaces velocity by speed along the box heading, and scores
    with the geometric mean of camera, fusion, and center-ness scores.
    """
    p3d = proposal.score_3d()
    if out is None or out.fusion_score < threshold:
        return Detection(box=proposal.box, score=p3d,
                         class_id=proposal.class_id, source=SOURCE_CAMERA)
    center = proposal.box.center
    if coord_mode == COORD_POLAR:
        pol = cart_to_polar(center)
        r = pol.r + out.offset_r
        phi = wrap_angle(pol.phi + out.offset_phi)
        new_center = np.array([r * math.cos(phi), r * math.sin(phi), center[2]])
    elif coord_mode == COORD_CARTESIAN:
        new_center = np.array([center[0] + out.offset_r,
                               center[1] + out.offset_phi, center[2]])
    else:
        raise ConfigError(f"unknown coordinate mode {coord_mode!r}")
    velocity = out.speed * np.array([math.cos(proposal.box.yaw),
                                     math.sin(proposal.box.yaw)])
    box = BBox3D(center=new_center, dims=proposal.box.dims,
                 yaw=proposal.box.yaw, velocity=velocity)
    score = (p3d * out.fusion_score * out.centerness) ** (1.0 / 3.0)
    return Detection(box=box, score=score, class_id=proposal.class_id,
                     source=SOURCE_FUSED)
