"""Scene corpus serialization.

A scene file is line-oriented text: a versioned JSON header line, then one
JSON record per frame (ground truth, ego trajectory, cameras, radar
sweeps, proposals). Dense arrays (camera feature maps, proposal feature
vectors) live in a sibling binary tensor container referenced from the
header. Loading regenerates everything except simulator provenance.

Frame record fields, in order:
    i       frame index
    gt      [cx, cy, cz, w, l, h, yaw, vx, vy, class_id] per box
    ego     [t, r00..r22 (row major), tx, ty, tz] per trajectory entry
    cams    [fu, fv, cx, cy, r00..r22, tx, ty, tz, width, height] per camera
    sweeps  {"t": timestamp, "ego": trajectory index,
             "pts": [x, y, z, rcs, vx, vy, age] per point}
    props   [cx, cy, cz, w, l, h, yaw, vx, vy, depth_var, conf,
             class_id, u, v, camera_id] per proposal
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .geometry import BBox3D, CameraIntrinsics, Pose
from .proposals import ImageProposal
from .radar import RadarPoint, RadarSweep
from .simulator import Camera, FrameData, Scene
from .tensorcore.checkpoint import load_tensors, save_tensors

SCENE_FORMAT = "polarfuse-scenes"
SCENE_VERSION = 1


def _floats(seq) -> list[float]:
    return [float(x) for x in np.asarray(seq).reshape(-1)]


def _box_fields(box: BBox3D, class_id: int) -> list[float]:
    return (_floats(box.center) + _floats(box.dims)
            + [float(box.yaw)] + _floats(box.velocity) + [float(class_id)])


def _pose_fields(pose: Pose) -> list[float]:
    return _floats(pose.rotation) + _floats(pose.translation)


def _pose_from(fields: list[float]) -> Pose:
    return Pose(np.array(fields[:9]).reshape(3, 3), np.array(fields[9:12]))


def save_frames(frames: list[FrameData], path: str | Path) -> Path:
    path = Path(path)
    tensor_path = Path(str(path) + ".bin")
    tensors: dict[str, np.ndarray] = {}
    lines = [json.dumps({
        "format": SCENE_FORMAT,
        "version": SCENE_VERSION,
        "frames": len(frames),
        "tensor_file": tensor_path.name,
    })]
    for frame in frames:
        scene = frame.scene
        record = {
            "i": frame.index,
            "gt": [_box_fields(b, c) for b, c in zip(scene.gt_boxes, scene.gt_classes)],
            "ego": [[float(t)] + _pose_fields(p) for t, p in scene.ego_trajectory],
            "cams": [
                [cam.intrinsics.fu, cam.intrinsics.fv, cam.intrinsics.cx,
                 cam.intrinsics.cy] + _pose_fields(cam.pose)
                + [float(cam.width), float(cam.height)]
                for cam in scene.cameras
            ],
            "sweeps": [
                {
                    "t": float(s.timestamp),
                    "ego": k,
                    "pts": [
                        _floats(p.position) + [float(p.rcs)] + _floats(p.doppler)
                        + [float(p.sweep_age)]
                        for p in s.points
                    ],
                }
                for k, s in enumerate(frame.sweeps)
            ],
            "props": [
                _box_fields(p.box, p.class_id)[:9]
                + [float(p.depth_var), float(p.class_conf), float(p.class_id),
                   float(p.keypoint[0]), float(p.keypoint[1]), float(p.camera_id)]
                for p in frame.proposals
            ],
        }
        lines.append(json.dumps(record))
        key = f"frame{frame.index:05d}"
        for ci, fmap in enumerate(frame.feature_maps):
            tensors[f"{key}/cam{ci}"] = fmap
        if frame.proposals:
            tensors[f"{key}/props"] = np.stack([p.feature for p in frame.proposals])
    path.write_text("\n".join(lines) + "\n")
    save_tensors(tensors, tensor_path)
    return path


def load_frames(path: str | Path) -> list[FrameData]:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty scene file")
    header = json.loads(lines[0])
    if header.get("format") != SCENE_FORMAT or header.get("version") != SCENE_VERSION:
        raise ValueError(f"{path}: unsupported scene header {header}")
    tensors = load_tensors(path.parent / header["tensor_file"])
    frames: list[FrameData] = []
    for line in lines[1:]:
        if not line.strip():
            continue
        rec = json.loads(line)
        gt_boxes, gt_classes = [], []
        for f in rec["gt"]:
            gt_boxes.append(BBox3D(center=np.array(f[0:3]), dims=np.array(f[3:6]),
                                   yaw=f[6], velocity=np.array(f[7:9])))
            gt_classes.append(int(f[9]))
        trajectory = [(f[0], _pose_from(f[1:13])) for f in rec["ego"]]
        cameras = []
        for f in rec["cams"]:
            cameras.append(Camera(
                intrinsics=CameraIntrinsics(fu=f[0], fv=f[1], cx=f[2], cy=f[3]),
                pose=_pose_from(f[4:16]),
                width=int(f[16]), height=int(f[17]),
            ))
        sweeps = []
        for s in rec["sweeps"]:
            pts = [RadarPoint(position=np.array(p[0:3]), rcs=p[3],
                              doppler=np.array(p[4:6]), sweep_age=p[6])
                   for p in s["pts"]]
            sweeps.append(RadarSweep(points=pts, ego_pose=trajectory[s["ego"]][1],
                                     timestamp=s["t"]))
        key = f"frame{rec['i']:05d}"
        feature_maps = []
        ci = 0
        while f"{key}/cam{ci}" in tensors:
            feature_maps.append(tensors[f"{key}/cam{ci}"])
            ci += 1
        prop_feats = tensors.get(f"{key}/props")
        proposals = []
        for j, f in enumerate(rec["props"]):
            proposals.append(ImageProposal(
                box=BBox3D(center=np.array(f[0:3]), dims=np.array(f[3:6]),
                           yaw=f[6], velocity=np.array(f[7:9])),
                depth_var=f[9], class_conf=f[10], class_id=int(f[11]),
                feature=prop_feats[j], keypoint=(f[12], f[13]), camera_id=int(f[14]),
            ))
        frames.append(FrameData(
            index=int(rec["i"]),
            scene=Scene(gt_boxes=gt_boxes, gt_classes=gt_classes,
                        ego_trajectory=trajectory, cameras=cameras),
            sweeps=sweeps,
            proposals=proposals,
            feature_maps=feature_maps,
        ))
    return frames
