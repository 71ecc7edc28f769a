"""Center-distance matching, average precision, and BEV non-maximum
suppression in the style of range-based 3D detection benchmarks.

Matching is greedy over detections in descending score order; a detection
becomes a true positive if an unmatched same-class ground truth of the
same frame lies within the BEV center-distance threshold (nearest one
wins). AP integrates the precision envelope at 101 recall points with the
benchmark's recall/precision floor of 0.1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..detections import Detection
from ..geometry import BBox3D


@dataclass(frozen=True)
class GtRecord:
    frame: int
    box: BBox3D
    class_id: int


@dataclass(frozen=True)
class DetRecord:
    frame: int
    detection: Detection


@dataclass
class ApResult:
    ap: float | None                      # None when there are no ground truths
    tp_flags: np.ndarray                  # per detection in score order
    matches: list[tuple[int, int]]        # (det index, gt index) pairs
    order: np.ndarray                     # detection indices in score order
    recalls: np.ndarray
    precisions: np.ndarray

    @property
    def max_recall(self) -> float:
        return float(self.recalls[-1]) if len(self.recalls) else 0.0


def _bev_dist(a: BBox3D, b: BBox3D) -> float:
    return float(np.hypot(a.center[0] - b.center[0], a.center[1] - b.center[1]))


def match_and_ap(
    dets: list[DetRecord],
    gts: list[GtRecord],
    threshold: float,
    min_recall: float = 0.1,
    min_precision: float = 0.1,
) -> ApResult:
    order = np.argsort([-d.detection.score for d in dets], kind="stable")
    gt_taken = np.zeros(len(gts), dtype=bool)
    tp_flags = np.zeros(len(dets), dtype=bool)
    matches: list[tuple[int, int]] = []
    for rank, di in enumerate(order):
        det = dets[di]
        best = None
        best_d = threshold
        for gi, gt in enumerate(gts):
            if gt_taken[gi] or gt.frame != det.frame:
                continue
            if gt.class_id != det.detection.class_id:
                continue
            d = _bev_dist(det.detection.box, gt.box)
            if d <= best_d:
                best_d = d
                best = gi
        if best is not None:
            gt_taken[best] = True
            tp_flags[rank] = True
            matches.append((int(di), int(best)))
    n_gt = len(gts)
    tp_cum = np.cumsum(tp_flags)
    ranks = np.arange(1, len(dets) + 1)
    recalls = tp_cum / n_gt if n_gt else np.zeros(len(dets))
    precisions = tp_cum / ranks if len(dets) else np.zeros(0)
    if n_gt == 0:
        return ApResult(None, tp_flags, matches, order, recalls, precisions)
    ap = _interpolated_ap(recalls, precisions, min_recall, min_precision)
    return ApResult(ap, tp_flags, matches, order, recalls, precisions)


def _interpolated_ap(recalls: np.ndarray, precisions: np.ndarray,
                     min_recall: float, min_precision: float) -> float:
    grid = np.linspace(0.0, 1.0, 101)
    envelope = np.zeros(101)
    for i, r in enumerate(grid):
        mask = recalls >= r - 1e-12
        envelope[i] = float(precisions[mask].max()) if mask.any() else 0.0
    keep = grid > min_recall + 1e-12
    adjusted = np.maximum(envelope[keep] - min_precision, 0.0)
    return float(adjusted.mean() / (1.0 - min_precision))


def nms_bev(dets: list[Detection], dist_threshold: float) -> list[Detection]:
    """Greedy class-wise suppression by BEV center distance."""
    if dist_threshold <= 0:
        raise ValueError(f"nms distance threshold must be positive, got {dist_threshold}")
    order = np.argsort([-d.score for d in dets], kind="stable")
    kept: list[Detection] = []
    for di in order:
        det = dets[di]
        if any(k.class_id == det.class_id and _bev_dist(k.box, det.box) < dist_threshold
               for k in kept):
            continue
        kept.append(det)
    return kept


def translation_velocity_errors(
    dets: list[DetRecord], gts: list[GtRecord], result: ApResult
) -> tuple[float | None, float | None]:
    """Mean center distance and velocity error over the result's matches."""
    if not result.matches:
        return None, None
    ate = []
    ave = []
    for di, gi in result.matches:
        db = dets[di].detection.box
        gb = gts[gi].box
        ate.append(_bev_dist(db, gb))
        ave.append(float(np.linalg.norm(db.velocity - gb.velocity)))
    return float(np.mean(ate)), float(np.mean(ave))


@dataclass
class MetricsReport:
    ap_per_threshold: dict[float, float | None] = field(default_factory=dict)
    mean_ap: float | None = None
    ate: float | None = None
    ave: float | None = None
    max_recall: dict[float, float] = field(default_factory=dict)
    bins: dict[str, dict[float, float | None]] = field(default_factory=dict)
    median_radial_error: float | None = None
    median_azimuth_error: float | None = None

    def rows(self) -> list[tuple[str, str, float]]:
        """CSV rows (name, bin, value); None values are skipped."""
        out = []
        for t, ap in sorted(self.ap_per_threshold.items()):
            if ap is not None:
                out.append((f"ap@{t:g}", "all", ap))
        if self.mean_ap is not None:
            out.append(("mean_ap", "all", self.mean_ap))
        if self.ate is not None:
            out.append(("ate", "all", self.ate))
        if self.ave is not None:
            out.append(("ave", "all", self.ave))
        for t, r in sorted(self.max_recall.items()):
            out.append((f"max_recall@{t:g}", "all", r))
        if self.median_radial_error is not None:
            out.append(("median_radial_error", "all", self.median_radial_error))
        if self.median_azimuth_error is not None:
            out.append(("median_azimuth_error", "all", self.median_azimuth_error))
        for bin_name, values in sorted(self.bins.items()):
            for t, ap in sorted(values.items()):
                if ap is not None:
                    out.append((f"ap@{t:g}", bin_name, ap))
        return out

    def write_csv(self, path):
        lines = ["name,bin,value"]
        for name, bin_name, value in self.rows():
            lines.append(f"{name},{bin_name},{value!r}")
        with open(path, "w") as f:
            f.write("\n".join(lines) + "\n")
