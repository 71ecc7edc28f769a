"""Training objective: auxiliary point-wise classification plus gated
detection terms.

total = mean over all (proposal, associated point) pairs of the in-box BCE
      + mean over proposals of [fusion-score BCE
                                + gate * (center-ness BCE + offset L1 + speed L1)]

where the gate is 1 only for proposals with at least one valid radar
return. All terms carry unit weight; classification runs on logits through
the numerically stable BCE primitive.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import tensorcore as tc
from .heads import HeadOutputs
from .targets import TrainingTargets


@dataclass
class LossBreakdown:
    total: tc.Tensor
    point_bce: float
    fusion_bce: float
    centerness_bce: float
    offset_l1: float
    speed_l1: float
    n_proposals: int
    n_point_terms: int

    def scalar(self) -> float:
        return self.total.item()


def compute_losses(
    head_outputs: list[HeadOutputs],
    in_box_logits: list[tc.Tensor],
    targets: TrainingTargets,
) -> LossBreakdown:
    m = len(head_outputs)
    if m == 0:
        zero = tc.constant(0.0)
        return LossBreakdown(zero, 0.0, 0.0, 0.0, 0.0, 0.0, 0, 0)

    point_terms = [
        tc.bce_with_logits(logits, labels)
        for logits, labels in zip(in_box_logits, targets.in_box_labels)
        if logits.size > 0
    ]
    n_points = int(sum(t.size for t in point_terms))
    if n_points:
        point_loss = tc.scale(tc.sum_(tc.concat(point_terms, axis=0)), 1.0 / n_points)
    else:
        point_loss = tc.constant(0.0)

    fusion_terms = []
    gated_terms = []
    fusion_val = cness_val = off_val = speed_val = 0.0
    for i, out in enumerate(head_outputs):
        gate = bool(targets.has_valid_radar[i])
        fb = tc.bce_with_logits(out.score_logit, np.array([float(gate)]))
        fusion_terms.append(fb)
        fusion_val += float(fb.data[0])
        if gate:
            cb = tc.bce_with_logits(out.centerness_logit,
                                    np.array([targets.gt_centerness[i]]))
            ol = tc.absolute(tc.sub(out.offset, tc.constant(targets.gt_offsets[i])))
            sl = tc.absolute(tc.sub(out.speed, tc.constant([targets.gt_speed[i]])))
            gated_terms += [cb, ol, sl]
            cness_val += float(cb.data[0])
            off_val += float(ol.data.sum())
            speed_val += float(sl.data[0])

    det_terms = fusion_terms + gated_terms
    det_loss = tc.scale(tc.sum_(tc.concat(det_terms, axis=0)), 1.0 / m)
    total = tc.add(point_loss, det_loss)
    return LossBreakdown(
        total=total,
        point_bce=float(point_loss.data),
        fusion_bce=fusion_val / m,
        centerness_bce=cness_val / m,
        offset_l1=off_val / m,
        speed_l1=speed_val / m,
        n_proposals=m,
        n_point_terms=n_points,
    )
