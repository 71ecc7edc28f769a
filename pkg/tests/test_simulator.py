import math

import numpy as np
import pytest

from polarfuse.errors import GenerationError
from polarfuse.geometry import points_in_box, transform_point
from polarfuse.simulator import (
    SceneSpec,
    SensorModel,
    class_signature,
    generate_corpus,
    generate_frame,
    generate_scene,
    make_cameras,
    render_proposals_and_features,
    render_radar,
)

SPEC = SceneSpec(counts=(3, 1, 2, 1))


def quiet_sensor(**overrides) -> SensorModel:
    base = dict(radar_radial_sigma=0.0, radar_azimuth_sigma=0.0,
                radar_doppler_sigma=0.0, clutter_rate=0.0, miss_prob_base=0.0,
                rcs_noise_sigma=0.0, cam_depth_sigma_rate=0.0, cam_pixel_sigma=0.0,
                cam_vel_sigma=0.0, feat_noise_sigma=0.0)
    base.update(overrides)
    return SensorModel(**base)


class TestGenerateScene:
    def test_empty_spec(self):
        scene = generate_scene(SceneSpec(counts=(0, 0, 0, 0)), seed=0)
        assert scene.gt_boxes == []
        assert len(scene.cameras) == SPEC.n_cameras

    def test_deterministic(self):
        a = generate_scene(SPEC, seed=42)
        b = generate_scene(SPEC, seed=42)
        assert len(a.gt_boxes) == len(b.gt_boxes)
        for ba, bb in zip(a.gt_boxes, b.gt_boxes):
            assert np.array_equal(ba.center, bb.center)
            assert np.array_equal(ba.dims, bb.dims)
            assert ba.yaw == bb.yaw

    def test_counts_and_non_overlap(self):
        scene = generate_scene(SceneSpec(counts=(10, 0, 0, 0)), seed=7)
        assert len(scene.gt_boxes) == 10
        assert all(c == 0 for c in scene.gt_classes)
        for i, a in enumerate(scene.gt_boxes):
            for b in scene.gt_boxes[i + 1:]:
                d = np.hypot(*(a.center[:2] - b.center[:2]))
                assert d > a.bev_radius + b.bev_radius

    def test_within_radius(self):
        scene = generate_scene(SPEC, seed=3)
        for box in scene.gt_boxes:
            assert np.hypot(*box.center[:2]) <= 55.0

    def test_infeasible_packing_raises(self):
        # 300 trucks cannot fit inside a 12 m disc.
        spec = SceneSpec(counts=(0, 300, 0, 0), max_radius=12.0)
        with pytest.raises(GenerationError):
            generate_scene(spec, seed=0)


class TestRenderRadar:
    def test_zero_noise_points_on_surface(self):
        scene = generate_scene(SceneSpec(counts=(4, 1, 0, 0)), seed=5)
        # Freeze objects so every sweep sees the same boxes.
        scene.gt_boxes = [type(b)(center=b.center, dims=b.dims, yaw=b.yaw,
                                  velocity=np.zeros(2)) for b in scene.gt_boxes]
        sweeps = render_radar(scene, quiet_sensor(), n_sweeps=6, seed=1)
        checked = 0
        for sweep in sweeps:
            for p, src in zip(sweep.points, sweep.source_index):
                world = p.position + sweep.ego_pose.translation
                assert points_in_box(world[None], scene.gt_boxes[src],
                                     inflate=1e-9)[0]
                checked += 1
        assert checked > 20

    def test_zero_noise_static_doppler_zero(self):
        scene = generate_scene(SceneSpec(counts=(3, 0, 0, 0), ego_speed_max=0.0),
                               seed=6)
        scene.gt_boxes = [type(b)(center=b.center, dims=b.dims, yaw=b.yaw,
                                  velocity=np.zeros(2)) for b in scene.gt_boxes]
        sweeps = render_radar(scene, quiet_sensor(), n_sweeps=3, seed=2)
        for sweep in sweeps:
            for p in sweep.points:
                assert np.allclose(p.doppler, 0.0)

    def test_receding_object_doppler_magnitude(self):
        scene = generate_scene(SceneSpec(counts=(0, 0, 0, 0), ego_speed_max=0.0),
                               seed=0)
        from polarfuse.geometry import BBox3D
        # Object straight ahead moving directly away at 5 m/s.
        scene.gt_boxes = [BBox3D(center=np.array([20.0, 0, 0.85]),
                                 dims=np.array([1.9, 4.6, 1.7]), yaw=0.0,
                                 velocity=np.array([5.0, 0.0]))]
        scene.gt_classes = [0]
        sweeps = render_radar(scene, quiet_sensor(), n_sweeps=1, seed=3)
        assert len(sweeps[0].points) > 0
        for p in sweeps[0].points:
            assert np.linalg.norm(p.doppler) == pytest.approx(5.0, abs=0.3)

    def test_all_miss_and_no_clutter_gives_empty(self):
        scene = generate_scene(SPEC, seed=9)
        sweeps = render_radar(scene, quiet_sensor(miss_prob_base=1.0),
                              n_sweeps=6, seed=4)
        assert all(len(s.points) == 0 for s in sweeps)

    def test_error_anisotropy_matches_model(self):
        # Radial error std / azimuthal arc error std at ~50 m tracks the config.
        from polarfuse.geometry import BBox3D
        model = quiet_sensor(radar_radial_sigma=0.1, radar_azimuth_sigma=0.0175,
                             returns_base_rate=8.0)
        scene = generate_scene(SceneSpec(counts=(0, 0, 0, 0), ego_speed_max=0.0),
                               seed=0)
        scene.gt_classes = [0]
        radial_err, arc_err = [], []
        for seed in range(120):
            scene.gt_boxes = [BBox3D(center=np.array([50.0, 0, 0.85]),
                                     dims=np.array([1.9, 4.6, 1.7]), yaw=1.1,
                                     velocity=np.zeros(2))]
            sweeps = render_radar(scene, model, n_sweeps=6, seed=seed)
            for sweep in sweeps:
                for p, truth in zip(sweep.points, sweep.truth_xy):
                    r_t = np.hypot(*truth)
                    phi_t = math.atan2(truth[1], truth[0])
                    r_m = np.hypot(*p.position[:2])
                    phi_m = math.atan2(p.position[1], p.position[0])
                    radial_err.append(r_m - r_t)
                    arc_err.append((phi_m - phi_t) * r_t)
        assert len(radial_err) >= 1000
        ratio = np.std(radial_err) / np.std(arc_err)
        want = 0.1 / (0.0175 * 50.0)
        assert abs(ratio - want) / want < 0.2


class TestRenderProposals:
    def test_zero_noise_matches_gt(self):
        scene = generate_scene(SceneSpec(counts=(3, 1, 1, 1)), seed=11)
        proposals, _ = render_proposals_and_features(
            scene, quiet_sensor(), seed=1, width=16, spec=SPEC)
        assert proposals, "no object visible in any camera"
        for p in proposals:
            gt = scene.gt_boxes[_nearest_gt(scene, p.box.center)]
            assert np.allclose(p.box.center, gt.center, atol=1e-6)
            assert np.array_equal(p.box.dims, gt.dims)
            assert p.box.yaw == gt.yaw
            assert np.allclose(p.box.velocity, gt.velocity)
            assert p.depth_var == 0.0

    def test_depth_noise_scales_with_distance(self):
        model = quiet_sensor(cam_depth_sigma_rate=0.04)
        scene = generate_scene(SceneSpec(counts=(0, 0, 0, 0)), seed=0)
        from polarfuse.geometry import BBox3D
        scene.gt_boxes = [BBox3D(center=np.array([50.0, 0, 0.85]),
                                 dims=np.array([1.9, 4.6, 1.7]), yaw=0.0)]
        scene.gt_classes = [0]
        errors = []
        for seed in range(300):
            props, _ = render_proposals_and_features(scene, model, seed=seed,
                                                     width=8, spec=SPEC)
            if props:
                errors.append(np.hypot(*props[0].box.center[:2]) - 50.0)
                assert props[0].depth_var == pytest.approx((0.04 * 50.0) ** 2, rel=0.1)
        assert np.std(errors) == pytest.approx(2.0, rel=0.25)

    def test_camera_azimuth_sharper_than_depth(self):
        # The complementary premise: pixel noise barely moves azimuth while
        # depth noise dominates the radial direction at range.
        model = quiet_sensor(cam_depth_sigma_rate=0.05, cam_pixel_sigma=0.5)
        scene = generate_scene(SceneSpec(counts=(0, 0, 0, 0)), seed=0)
        from polarfuse.geometry import BBox3D
        scene.gt_boxes = [BBox3D(center=np.array([45.0, 3.0, 0.85]),
                                 dims=np.array([1.9, 4.6, 1.7]), yaw=0.4)]
        scene.gt_classes = [0]
        radial, arc = [], []
        gt_r = np.hypot(45.0, 3.0)
        gt_phi = math.atan2(3.0, 45.0)
        for seed in range(300):
            props, _ = render_proposals_and_features(scene, model, seed=seed,
                                                     width=8, spec=SPEC)
            for p in props:
                r = np.hypot(*p.box.center[:2])
                phi = math.atan2(p.box.center[1], p.box.center[0])
                radial.append(r - gt_r)
                arc.append((phi - gt_phi) * gt_r)
        assert np.std(arc) < 0.4 * np.std(radial)

    def test_feature_map_carries_class_signature(self):
        scene = generate_scene(SceneSpec(counts=(1, 0, 0, 0)), seed=21)
        model = quiet_sensor(feat_noise_sigma=0.01)
        proposals, maps = render_proposals_and_features(scene, model, seed=2,
                                                        width=16, spec=SPEC)
        assert proposals
        prop = proposals[0]
        sig = class_signature(0, 16, model.feat_signal_scale)
        cos = (prop.feature @ sig) / (np.linalg.norm(prop.feature)
                                      * np.linalg.norm(sig))
        assert cos > 0.9

    def test_proposal_cap(self):
        scene = generate_scene(SceneSpec(counts=(12, 0, 0, 0)), seed=31)
        proposals, _ = render_proposals_and_features(
            scene, quiet_sensor(), seed=3, width=8, spec=SPEC, max_proposals=2)
        per_cam = {}
        for p in proposals:
            per_cam[p.camera_id] = per_cam.get(p.camera_id, 0) + 1
        assert all(v <= 2 for v in per_cam.values())


class TestFrames:
    def test_frame_determinism(self):
        a = generate_frame(SPEC, SensorModel(), SPEC.counts, seed=9, index=0, width=8)
        b = generate_frame(SPEC, SensorModel(), SPEC.counts, seed=9, index=0, width=8)
        assert len(a.proposals) == len(b.proposals)
        for pa, pb in zip(a.proposals, b.proposals):
            assert np.array_equal(pa.box.center, pb.box.center)
            assert np.array_equal(pa.feature, pb.feature)
        for ma, mb in zip(a.feature_maps, b.feature_maps):
            assert np.array_equal(ma, mb)
        for sa, sb in zip(a.sweeps, b.sweeps):
            assert len(sa.points) == len(sb.points)
            for qa, qb in zip(sa.points, sb.points):
                assert np.array_equal(qa.position, qb.position)

    def test_corpus_counts_within_ranges(self):
        ranges = ((1, 3), (0, 1), (0, 2), (0, 1))
        frames = generate_corpus(SPEC, SensorModel(), 6, seed=5, width=8,
                                 count_ranges=ranges)
        assert len(frames) == 6
        for f in frames:
            for cls, (lo, hi) in enumerate(ranges):
                n = sum(1 for c in f.scene.gt_classes if c == cls)
                assert lo <= n <= hi


def _nearest_gt(scene, center):
    d = [np.hypot(*(b.center[:2] - center[:2])) for b in scene.gt_boxes]
    return int(np.argmin(d))


def test_cameras_cover_full_circle():
    cams = make_cameras(SPEC)
    assert len(cams) == SPEC.n_cameras
    # A point 20 m out in any direction projects into at least one camera.
    for phi in np.linspace(-math.pi, math.pi, 73):
        p = np.array([20 * math.cos(phi), 20 * math.sin(phi), 1.0])
        visible = 0
        for cam in cams:
            q = transform_point(p, cam.pose.inverse())
            if q[2] <= 0:
                continue
            u = cam.intrinsics.fu * q[0] / q[2] + cam.intrinsics.cx
            v = cam.intrinsics.fv * q[1] / q[2] + cam.intrinsics.cy
            if 0 <= u < cam.width and 0 <= v < cam.height:
                visible += 1
        assert visible >= 1, f"direction {phi} not covered"
