"""Radar point representation, multi-sweep accumulation, and input prep.

Points measured at earlier sweeps are mapped to the reference frame by
shifting with the ego translation between the frames and advancing the
x/y position by the ego-compensated Doppler velocity times the point age
(z is shifted by ego motion only).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .geometry import Pose

N_POINT_FEATURES = 4  # rcs, doppler_x, doppler_y, sweep_age


@dataclass(frozen=True)
class RadarPoint:
    """One radar return in a vehicle frame."""

    position: np.ndarray          # (x, y, z) m
    rcs: float                    # dBsm
    doppler: np.ndarray           # ego-compensated radial velocity (vx, vy) m/s
    sweep_age: float = 0.0        # seconds before the reference frame

    def __post_init__(self):
        p = np.asarray(self.position, dtype=np.float64).reshape(3)
        d = np.asarray(self.doppler, dtype=np.float64).reshape(2)
        if not np.all(np.isfinite(p)):
            raise ValueError(f"radar position must be finite, got {p}")
        if self.sweep_age < 0:
            raise ValueError(f"sweep_age must be >= 0, got {self.sweep_age}")
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "doppler", d)

    def features(self) -> np.ndarray:
        return np.array([self.rcs, self.doppler[0], self.doppler[1], self.sweep_age])


@dataclass
class RadarSweep:
    """Points captured in the ego frame at one timestamp.

    source_index / truth_xy are optional simulator provenance (object index
    per return, -1 for clutter; pre-noise surface position). They are not
    serialized and exist for diagnostics only.
    """

    points: list[RadarPoint]
    ego_pose: Pose | None
    timestamp: float
    source_index: np.ndarray | None = None
    truth_xy: np.ndarray | None = None


def accumulate_sweeps(sweeps: list[RadarSweep], reference: Pose, n_sweeps: int) -> list[RadarPoint]:
    """Merge the first n_sweeps sweeps into the reference frame.

    sweeps[0] is the reference-time sweep; later entries go back in time
    (non-increasing timestamps). Each point is compensated for ego
    translation and for its own Doppler motion over its age.
    """
    if not (1 <= n_sweeps <= len(sweeps)):
        raise ValueError(f"n_sweeps must be in [1, {len(sweeps)}], got {n_sweeps}")
    t_ref = sweeps[0].timestamp
    merged: list[RadarPoint] = []
    for sweep in sweeps[:n_sweeps]:
        if sweep.ego_pose is None:
            raise ConfigError(f"sweep at t={sweep.timestamp} has no ego pose")
        tau = t_ref - sweep.timestamp
        delta = sweep.ego_pose.translation - reference.translation
        for pt in sweep.points:
            pos = pt.position + delta
            pos = pos + np.array([pt.doppler[0] * tau, pt.doppler[1] * tau, 0.0])
            merged.append(RadarPoint(position=pos, rcs=pt.rcs, doppler=pt.doppler,
                                     sweep_age=tau))
    return merged


@dataclass(frozen=True)
class FeatureStats:
    """Per-feature mean/std used to z-score (rcs, vx, vy, age)."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mean, dtype=np.float64).reshape(N_POINT_FEATURES)
        s = np.asarray(self.std, dtype=np.float64).reshape(N_POINT_FEATURES)
        if not np.all(s > 0):
            raise ValueError(f"feature stds must be positive, got {s}")
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "std", s)

    @staticmethod
    def identity() -> "FeatureStats":
        return FeatureStats(np.zeros(N_POINT_FEATURES), np.ones(N_POINT_FEATURES))

    @staticmethod
    def from_points(points: list[RadarPoint], floor: float = 1e-3) -> "FeatureStats":
        if not points:
            return FeatureStats.identity()
        feats = np.stack([p.features() for p in points])
        return FeatureStats(feats.mean(axis=0), np.maximum(feats.std(axis=0), floor))


@dataclass
class PreparedRadar:
    """Fixed-size point set fed to the radar backbone.

    positions are raw meters (used for grouping, association, and polar
    geometry); features are z-scored. Sentinel padding rows generated for
    empty inputs carry valid=False and all-zero features.
    """

    positions: np.ndarray      # [k, 3]
    features: np.ndarray       # [k, N_POINT_FEATURES] z-scored
    valid: np.ndarray          # [k] bool
    source: np.ndarray         # [k] index into the accumulated point list, -1 for sentinel
    raw_features: np.ndarray | None = None   # same rows before z-scoring


def prepare_radar_input(
    points: list[RadarPoint],
    max_range: float,
    k_max: int,
    stats: FeatureStats,
    rng_seed: int,
) -> PreparedRadar:
    """Range-filter, resample to exactly k_max points, and z-score features.

    With more than k_max in-range points a seeded subsample without
    replacement is taken; with fewer, every point is kept once and the
    remainder is filled by seeded duplication. An empty in-range set yields
    k_max invalid all-zero sentinel rows.
    """
    if k_max <= 0:
        raise ValueError(f"k_max must be positive, got {k_max}")
    in_range = [
        (i, p) for i, p in enumerate(points)
        if float(np.hypot(p.position[0], p.position[1])) <= max_range
    ]
    if not in_range:
        return PreparedRadar(
            positions=np.zeros((k_max, 3)),
            features=np.zeros((k_max, N_POINT_FEATURES)),
            valid=np.zeros(k_max, dtype=bool),
            source=np.full(k_max, -1, dtype=np.int64),
            raw_features=np.zeros((k_max, N_POINT_FEATURES)),
        )
    rng = np.random.default_rng(rng_seed)
    n = len(in_range)
    if n > k_max:
        keep = rng.choice(n, size=k_max, replace=False)
    elif n < k_max:
        keep = np.concatenate([np.arange(n), rng.integers(0, n, size=k_max - n)])
    else:
        keep = np.arange(n)
    positions = np.stack([in_range[i][1].position for i in keep])
    raw = np.stack([in_range[i][1].features() for i in keep])
    source = np.array([in_range[i][0] for i in keep], dtype=np.int64)
    features = (raw - stats.mean) / stats.std
    return PreparedRadar(
        positions=positions,
        features=features,
        valid=np.ones(k_max, dtype=bool),
        source=source,
        raw_features=raw,
    )
