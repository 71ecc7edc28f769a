"""Synthetic scene, radar, and camera-proposal generation.

The sensor error model mirrors the premise the pipeline is built on: radar
returns are radially sharp but azimuthally coarse and carry Doppler;
camera proposals have sharp azimuth (pixel-level keypoints) but noisy
depth that grows with distance. Radar returns are placed on the box
perimeter facing the sensor; clutter is Poisson-uniform over the annulus.

Ego trajectories translate without rotating, so the translation-only sweep
accumulation is exact for static points.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .errors import GenerationError
from .geometry import (
    BBox3D,
    CameraIntrinsics,
    Pose,
    box_corners,
    project_point,
    transform_point,
    unproject_keypoint,
    wrap_angle,
)
from .proposals import ImageProposal
from .radar import RadarPoint, RadarSweep

_CLASS_SIGNATURE_SALT = 0x5EED


@dataclass(frozen=True)
class ClassSpec:
    name: str
    dims_mean: tuple[float, float, float]   # (w, l, h)
    dims_sigma: float
    speed_max: float
    p_static: float


DEFAULT_CLASSES: tuple[ClassSpec, ...] = (
    ClassSpec("car", (1.9, 4.6, 1.7), 0.10, 12.0, 0.3),
    ClassSpec("truck", (2.5, 7.5, 3.0), 0.20, 10.0, 0.3),
    ClassSpec("pedestrian", (0.65, 0.65, 1.75), 0.05, 1.8, 0.2),
    ClassSpec("cyclist", (0.7, 1.9, 1.5), 0.08, 6.0, 0.2),
)


@dataclass(frozen=True)
class Camera:
    intrinsics: CameraIntrinsics
    pose: Pose          # camera frame -> vehicle frame
    width: int
    height: int


@dataclass
class Scene:
    gt_boxes: list[BBox3D]
    gt_classes: list[int]
    ego_trajectory: list[tuple[float, Pose]]   # (timestamp, pose), reference first
    cameras: list[Camera]


@dataclass(frozen=True)
class SensorModel:
    radar_radial_sigma: float = 0.1       # m
    radar_azimuth_sigma: float = 0.0175   # rad (~1 deg)
    radar_doppler_sigma: float = 0.1      # m/s
    clutter_rate: float = 25.0            # expected clutter points per sweep
    miss_prob_base: float = 0.15          # per object per sweep
    returns_base_rate: float = 3.0        # mean returns/sweep at 0 dBsm, ref range
    returns_ref_range: float = 10.0       # m
    rcs_by_class: tuple[float, ...] = (10.0, 15.0, -5.0, 0.0)   # dBsm
    rcs_noise_sigma: float = 1.0
    cam_depth_sigma_rate: float = 0.05    # depth noise std per meter of depth
    cam_pixel_sigma: float = 0.5          # keypoint noise (pixels)
    cam_vel_sigma: float = 2.0            # proposal velocity noise (m/s)
    feat_signal_scale: float = 2.0        # class signature magnitude in feature maps
    feat_noise_sigma: float = 0.25


@dataclass(frozen=True)
class SceneSpec:
    counts: tuple[int, ...]                      # objects per class
    classes: tuple[ClassSpec, ...] = DEFAULT_CLASSES
    min_radius: float = 4.0
    max_radius: float = 53.0
    ego_speed_max: float = 8.0
    n_cameras: int = 4
    image_width: int = 200
    image_height: int = 112
    focal: float = 95.0
    camera_height: float = 1.6
    feature_stride: int = 4
    n_sweeps: int = 6
    sweep_period: float = 0.1

    @property
    def feature_map_shape(self) -> tuple[int, int]:
        return (self.image_height // self.feature_stride,
                self.image_width // self.feature_stride)


def make_cameras(spec: SceneSpec) -> list[Camera]:
    """Evenly-spaced horizontal cameras covering the full circle."""
    intr = CameraIntrinsics(fu=spec.focal, fv=spec.focal,
                            cx=spec.image_width / 2.0, cy=spec.image_height / 2.0)
    cams = []
    for i in range(spec.n_cameras):
        yaw = wrap_angle(i * 2.0 * math.pi / spec.n_cameras)
        forward = np.array([math.cos(yaw), math.sin(yaw), 0.0])
        down = np.array([0.0, 0.0, -1.0])
        right = np.cross(down, forward)
        rot = np.stack([right, down, forward], axis=1)
        pose = Pose(rot, np.array([0.0, 0.0, spec.camera_height]))
        cams.append(Camera(intrinsics=intr, pose=pose,
                           width=spec.image_width, height=spec.image_height))
    return cams


def generate_scene(spec: SceneSpec, seed: int, max_retries: int = 200) -> Scene:
    """Place non-overlapping boxes with class-typical sizes, yaw, velocity."""
    rng = np.random.default_rng(seed)
    boxes: list[BBox3D] = []
    classes: list[int] = []
    for cls_id, count in enumerate(spec.counts):
        cls = spec.classes[cls_id]
        for _ in range(count):
            placed = False
            for _attempt in range(max_retries):
                r = math.sqrt(rng.uniform(spec.min_radius**2, spec.max_radius**2))
                phi = rng.uniform(-math.pi, math.pi)
                dims = np.maximum(
                    np.asarray(cls.dims_mean) + rng.normal(0, cls.dims_sigma, 3), 0.3)
                yaw = rng.uniform(-math.pi, math.pi)
                speed = 0.0 if rng.uniform() < cls.p_static else rng.uniform(0, cls.speed_max)
                box = BBox3D(
                    center=np.array([r * math.cos(phi), r * math.sin(phi), dims[2] / 2.0]),
                    dims=dims,
                    yaw=yaw,
                    velocity=speed * np.array([math.cos(yaw), math.sin(yaw)]),
                )
                clear = all(
                    np.hypot(*(box.center[:2] - other.center[:2]))
                    > box.bev_radius + other.bev_radius
                    for other in boxes
                )
                if clear:
                    boxes.append(box)
                    classes.append(cls_id)
                    placed = True
                    break
            if not placed:
                raise GenerationError(
                    f"could not place object of class {cls.name} after {max_retries} tries")
    ego_speed = rng.uniform(0, spec.ego_speed_max)
    trajectory = []
    for s in range(spec.n_sweeps):
        t = -s * spec.sweep_period
        trajectory.append((t, Pose(np.eye(3), np.array([ego_speed * t, 0.0, 0.0]))))
    return Scene(gt_boxes=boxes, gt_classes=classes,
                 ego_trajectory=trajectory, cameras=make_cameras(spec))


def _bev_rect_edges(box: BBox3D, at_time: float):
    """Corner pairs of the BEV footprint at a past time (box moves backward)."""
    shift = np.array([box.velocity[0] * at_time, box.velocity[1] * at_time, 0.0])
    corners = box_corners(box)[:4, :2] + shift[:2]
    center = box.center[:2] + shift[:2]
    edges = []
    for j in range(4):
        a, b = corners[j], corners[(j + 1) % 4]
        mid = 0.5 * (a + b)
        direction = b - a
        normal = np.array([direction[1], -direction[0]])
        if normal @ (mid - center) < 0:
            normal = -normal
        edges.append((a, b, mid, normal / max(np.linalg.norm(normal), 1e-12)))
    return edges, center, shift


def _sample_surface_points(rng, box: BBox3D, at_time: float, sensor_xy: np.ndarray,
                           count: int) -> np.ndarray | None:
    """Points on the perimeter edges facing the sensor, uniform by length."""
    edges, center, shift = _bev_rect_edges(box, at_time)
    visible = [(a, b) for a, b, mid, n in edges if n @ (sensor_xy - mid) > 0]
    if not visible:
        return None
    lengths = np.array([np.linalg.norm(b - a) for a, b in visible])
    total = lengths.sum()
    u = rng.uniform(0.0, total, size=count)
    cum = np.concatenate([[0.0], np.cumsum(lengths)])
    pts = np.empty((count, 3))
    for i, ui in enumerate(u):
        e = min(int(np.searchsorted(cum, ui, side="right")) - 1, len(visible) - 1)
        frac = (ui - cum[e]) / lengths[e]
        a, b = visible[e]
        pts[i, :2] = a + frac * (b - a)
    z0 = box.center[2] - box.dims[2] / 2.0
    pts[:, 2] = rng.uniform(z0, z0 + box.dims[2], size=count)
    return pts


def render_radar(scene: Scene, model: SensorModel, n_sweeps: int, seed: int,
                 max_range: float = 55.0) -> list[RadarSweep]:
    """Render per-sweep returns: surface hits with polar noise and Doppler,
    plus uniform annulus clutter. Points are stored in each sweep's ego frame."""
    if n_sweeps < 1:
        raise ValueError(f"n_sweeps must be >= 1, got {n_sweeps}")
    rng = np.random.default_rng(seed)
    sweeps: list[RadarSweep] = []
    t_ref = scene.ego_trajectory[0][0]
    for t_s, pose_s in scene.ego_trajectory[:n_sweeps]:
        tau = t_ref - t_s
        sensor_xy = pose_s.translation[:2]
        pts: list[RadarPoint] = []
        sources: list[int] = []
        truths: list[np.ndarray] = []
        for obj_i, (box, cls_id) in enumerate(zip(scene.gt_boxes, scene.gt_classes)):
            center_now = box.center[:2] + box.velocity * (t_s - t_ref)
            r_obj = float(np.linalg.norm(center_now - sensor_xy))
            rcs_db = model.rcs_by_class[cls_id]
            lam = (model.returns_base_rate * 10.0 ** (rcs_db / 20.0)
                   * min(1.0, model.returns_ref_range / max(r_obj, 1.0)))
            missed = rng.uniform() < model.miss_prob_base
            count = rng.poisson(lam)
            if missed or count == 0:
                continue
            surface = _sample_surface_points(rng, box, t_s - t_ref, sensor_xy, count)
            if surface is None:
                continue
            for p_world in surface:
                rel = p_world - np.array([sensor_xy[0], sensor_xy[1], 0.0])
                r = math.hypot(rel[0], rel[1])
                phi = math.atan2(rel[1], rel[0])
                r_n = max(r + rng.normal(0.0, model.radar_radial_sigma), 0.0)
                phi_n = phi + rng.normal(0.0, model.radar_azimuth_sigma)
                pos = np.array([r_n * math.cos(phi_n), r_n * math.sin(phi_n), rel[2]])
                ray = np.array([math.cos(phi), math.sin(phi)])
                radial_speed = float(box.velocity @ ray) + rng.normal(
                    0.0, model.radar_doppler_sigma)
                pts.append(RadarPoint(
                    position=pos,
                    rcs=rcs_db + rng.normal(0.0, model.rcs_noise_sigma),
                    doppler=radial_speed * ray,
                    sweep_age=tau,
                ))
                sources.append(obj_i)
                truths.append(rel[:2].copy())
        n_clutter = rng.poisson(model.clutter_rate)
        for _ in range(n_clutter):
            r = math.sqrt(rng.uniform(1.0, max_range**2))
            phi = rng.uniform(-math.pi, math.pi)
            pts.append(RadarPoint(
                position=np.array([r * math.cos(phi), r * math.sin(phi),
                                   rng.uniform(0.0, 2.0)]),
                rcs=rng.normal(-2.0, 3.0),
                doppler=rng.normal(0.0, 0.3, size=2),
                sweep_age=tau,
            ))
            sources.append(-1)
            truths.append(pts[-1].position[:2].copy())
        sweeps.append(RadarSweep(
            points=pts, ego_pose=pose_s, timestamp=t_s,
            source_index=np.array(sources, dtype=np.int64),
            truth_xy=np.array(truths).reshape(-1, 2),
        ))
    return sweeps


def class_signature(class_id: int, width: int, scale: float) -> np.ndarray:
    """Deterministic unit direction per class, scaled; the feature-map payload."""
    rng = np.random.default_rng(_CLASS_SIGNATURE_SALT + class_id)
    v = rng.standard_normal(width)
    return scale * v / np.linalg.norm(v)


def _bilinear_read(grid: np.ndarray, x: float, y: float) -> np.ndarray:
    h, w = grid.shape[:2]
    x0, y0 = int(math.floor(x)), int(math.floor(y))
    fx, fy = x - x0, y - y0
    out = np.zeros(grid.shape[-1])
    for dy, wy in ((0, 1 - fy), (1, fy)):
        for dx, wx in ((0, 1 - fx), (1, fx)):
            yy, xx = y0 + dy, x0 + dx
            if 0 <= yy < h and 0 <= xx < w:
                out += wy * wx * grid[yy, xx]
    return out


def render_proposals_and_features(
    scene: Scene,
    model: SensorModel,
    seed: int,
    width: int,
    spec: SceneSpec,
    max_proposals: int = 64,
) -> tuple[list[ImageProposal], list[np.ndarray]]:
    """Noisy proposals for visible objects plus class-stamped feature maps.

    Feature maps carry each object's class signature over its projected
    silhouette (painted far to near) on top of Gaussian noise; the proposal
    feature is the map read at the (noisy) keypoint, as a keypoint detector
    would produce.
    """
    rng = np.random.default_rng(seed)
    fh, fw = spec.feature_map_shape
    stride = spec.feature_stride
    feature_maps = [rng.normal(0.0, model.feat_noise_sigma, size=(fh, fw, width))
                    for _ in scene.cameras]

    order = sorted(range(len(scene.gt_boxes)),
                   key=lambda i: -float(np.linalg.norm(scene.gt_boxes[i].center[:2])))
    for cam_i, cam in enumerate(scene.cameras):
        inv = cam.pose.inverse()
        fmap = feature_maps[cam_i]
        for obj_i in order:
            box = scene.gt_boxes[obj_i]
            corners_cam = np.array([transform_point(c, inv) for c in box_corners(box)])
            front = corners_cam[corners_cam[:, 2] > 0.1]
            if len(front) < 4:
                continue
            uv = np.array([project_point(p, cam.intrinsics) for p in front])
            u0, v0 = uv.min(axis=0)
            u1, v1 = uv.max(axis=0)
            if u1 < 0 or v1 < 0 or u0 >= cam.width or v0 >= cam.height:
                continue
            sig = class_signature(scene.gt_classes[obj_i], width, model.feat_signal_scale)
            x0 = max(int(u0 / stride), 0)
            x1 = min(int(math.ceil(u1 / stride)), fw - 1)
            y0 = max(int(v0 / stride), 0)
            y1 = min(int(math.ceil(v1 / stride)), fh - 1)
            patch_noise = rng.normal(0.0, model.feat_noise_sigma,
                                     size=(y1 - y0 + 1, x1 - x0 + 1, width))
            fmap[y0:y1 + 1, x0:x1 + 1] = sig + patch_noise

    per_camera: list[list[ImageProposal]] = [[] for _ in scene.cameras]
    for cam_i, cam in enumerate(scene.cameras):
        inv = cam.pose.inverse()
        fmap = feature_maps[cam_i]
        for obj_i, box in enumerate(scene.gt_boxes):
            center_cam = transform_point(box.center, inv)
            if center_cam[2] <= 0.5:
                continue
            u, v = project_point(center_cam, cam.intrinsics)
            if not (0 <= u < cam.width and 0 <= v < cam.height):
                continue
            d_true = float(center_cam[2])
            sigma_d = model.cam_depth_sigma_rate * d_true
            d_noisy = max(d_true + rng.normal(0.0, sigma_d) if sigma_d > 0 else d_true, 0.5)
            kp = (u + rng.normal(0.0, model.cam_pixel_sigma) if model.cam_pixel_sigma > 0 else u,
                  v + rng.normal(0.0, model.cam_pixel_sigma) if model.cam_pixel_sigma > 0 else v)
            center_veh = transform_point(
                unproject_keypoint(kp[0], kp[1], d_noisy, cam.intrinsics), cam.pose)
            velocity = box.velocity + (rng.normal(0.0, model.cam_vel_sigma, 2)
                                       if model.cam_vel_sigma > 0 else 0.0)
            r_obj = float(np.linalg.norm(box.center[:2]))
            conf = float(np.clip(rng.uniform(0.80, 0.98) - 0.2 * r_obj / 55.0, 0.05, 1.0))
            feature = _bilinear_read(fmap, kp[0] / stride, kp[1] / stride)
            per_camera[cam_i].append(ImageProposal(
                box=BBox3D(center=center_veh, dims=box.dims.copy(), yaw=box.yaw,
                           velocity=velocity),
                depth_var=sigma_d * sigma_d,
                class_conf=conf,
                class_id=scene.gt_classes[obj_i],
                feature=feature,
                keypoint=kp,
                camera_id=cam_i,
            ))

    proposals: list[ImageProposal] = []
    for plist in per_camera:
        plist.sort(key=lambda p: -p.score_3d())
        proposals.extend(plist[:max_proposals])
    return proposals, feature_maps


@dataclass
class FrameData:
    """One simulated frame: the world plus everything the sensors produced."""

    index: int
    scene: Scene
    sweeps: list[RadarSweep]
    proposals: list[ImageProposal]
    feature_maps: list[np.ndarray]


def generate_frame(spec: SceneSpec, sensor: SensorModel, counts: tuple[int, ...],
                   seed: int, index: int, width: int,
                   max_proposals: int = 64) -> FrameData:
    scene = generate_scene(dataclasses.replace(spec, counts=tuple(counts)), seed)
    sweeps = render_radar(scene, sensor, spec.n_sweeps, seed + 1)
    proposals, maps = render_proposals_and_features(
        scene, sensor, seed + 2, width, spec, max_proposals)
    return FrameData(index=index, scene=scene, sweeps=sweeps,
                     proposals=proposals, feature_maps=maps)


def generate_corpus(spec: SceneSpec, sensor: SensorModel, n_frames: int, seed: int,
                    width: int, count_ranges: tuple[tuple[int, int], ...] | None = None,
                    max_proposals: int = 64) -> list[FrameData]:
    """Seeded corpus; per-frame object counts drawn from inclusive ranges."""
    rng = np.random.default_rng(seed)
    frames = []
    for i in range(n_frames):
        if count_ranges is not None:
            counts = tuple(int(rng.integers(lo, hi + 1)) for lo, hi in count_ranges)
        else:
            counts = spec.counts
        frame_seed = int(rng.integers(0, 2**31 - 1))
        frames.append(generate_frame(spec, sensor, counts, frame_seed, i, width,
                                     max_proposals))
    return frames
