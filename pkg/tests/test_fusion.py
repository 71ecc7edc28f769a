import math

import numpy as np
import pytest

from polarfuse import tensorcore as tc
from polarfuse.association import AssociationSet
from polarfuse.detections import SOURCE_CAMERA, SOURCE_FUSED
from polarfuse.errors import ConfigError
from polarfuse.fusion import (
    COORD_CARTESIAN,
    COORD_POLAR,
    DetectionHeads,
    FrameInputs,
    FusionModel,
    FusionOutput,
    I2REncoder,
    PatchConfig,
    R2IEncoder,
    RadarBackbone,
    TrainingTargets,
    adaptive_patch_size,
    centerness_target,
    compute_losses,
    compute_targets,
    decode_and_score,
    desk_arch,
    extract_patch,
    extract_patches,
    patch_size_floor,
)
from polarfuse.fusion.backbone import BackboneConfig, StageConfig
from polarfuse.geometry import BBox3D, cart_to_polar
from polarfuse.proposals import ImageProposal

CFG = PatchConfig()


def make_proposal(center, cls=0, width=8, depth_var=0.3, yaw=0.0):
    rng = np.random.default_rng(0)
    return ImageProposal(box=BBox3D(center=np.array(center, dtype=float),
                                    dims=np.array([1.8, 4.4, 1.6]), yaw=yaw),
                         depth_var=depth_var, class_conf=0.9, class_id=cls,
                         feature=rng.standard_normal(width), keypoint=(5.0, 5.0),
                         camera_id=0)


class TestAdaptivePatchSize:
    @pytest.mark.parametrize("d,raw", [(0.0, 25), (55.0, 9), (110.0, 3)])
    def test_reference_values(self, d, raw):
        assert patch_size_floor(d, CFG) == raw
        assert adaptive_patch_size(d, CFG) == raw   # already odd

    def test_even_floor_rounds_up_to_odd(self):
        # A distance whose floor lands mid-interval at 10 (even).
        d = 55.0 * (2.0 - math.log(10.4 / 3.5))
        assert patch_size_floor(d, CFG) == 10
        assert adaptive_patch_size(d, CFG) == 11

    def test_far_range_clamps_to_three(self):
        assert adaptive_patch_size(1000.0, CFG) == 3

    def test_monotone_nonincreasing(self):
        ds = np.linspace(0, 200, 400)
        taus = [adaptive_patch_size(d, CFG) for d in ds]
        assert all(a >= b for a, b in zip(taus, taus[1:]))

    def test_negative_distance_rejected(self):
        with pytest.raises(ValueError):
            patch_size_floor(-1.0, CFG)


class TestExtractPatch:
    def test_tau_seven_identity_window(self):
        rng = np.random.default_rng(2)
        fmap = tc.constant(rng.standard_normal((11, 13, 3)))
        patch = extract_patch(fmap, center=(6.0, 5.0), tau=7)
        want = fmap.data[2:9, 3:10]
        assert np.allclose(patch.data, want, atol=1e-9)

    def test_constant_map_any_tau(self):
        fmap = tc.constant(np.full((10, 10, 2), 1.7))
        patch = extract_patch(fmap, center=(4.5, 4.5), tau=9)
        assert np.allclose(patch.data, 1.7)

    def test_center_outside_gives_zero(self):
        fmap = tc.constant(np.ones((10, 10, 2)))
        patch = extract_patch(fmap, center=(-50.0, -50.0), tau=5)
        assert np.all(patch.data == 0.0)

    def test_batched_matches_single(self):
        rng = np.random.default_rng(3)
        fmap = tc.constant(rng.standard_normal((9, 9, 4)))
        centers = np.array([[4.0, 4.0], [2.5, 6.0]])
        taus = np.array([7, 3])
        batch = extract_patches(fmap, centers, taus)
        for i in range(2):
            single = extract_patch(fmap, tuple(centers[i]), int(taus[i]))
            assert np.allclose(batch.data[i], single.data)


class TestRadarBackbone:
    def _backbone(self, stages=((2.0, 3, (8, 8)),), in_features=4, seed=0):
        cfg = BackboneConfig(stages=tuple(StageConfig(*s) for s in stages))
        return RadarBackbone(np.random.default_rng(seed), cfg, in_features)

    def test_single_point_is_own_neighborhood(self):
        bb = self._backbone()
        feats = np.random.default_rng(1).standard_normal((1, 4))
        out = bb.forward(np.zeros((1, 3)), tc.constant(feats))
        assert out.shape == (1, 8)
        assert np.all(np.isfinite(out.data))

    def test_duplicated_points_get_identical_features(self):
        bb = self._backbone()
        rng = np.random.default_rng(2)
        pos = rng.uniform(-3, 3, (5, 3))
        feats = rng.standard_normal((5, 4))
        out = bb.forward(np.vstack([pos, pos]), tc.constant(np.vstack([feats, feats])))
        assert np.allclose(out.data[:5], out.data[5:], atol=1e-12)

    def test_far_points_independent(self):
        bb = self._backbone(stages=((1.0, 3, (8, 8)), (2.0, 3, (8, 8))))
        rng = np.random.default_rng(3)
        pos = np.array([[0.0, 0, 0], [100.0, 0, 0]])
        feats = rng.standard_normal((2, 4))
        base = bb.forward(pos, tc.constant(feats)).data.copy()
        feats2 = feats.copy()
        feats2[1] += 10.0   # perturb the far point only
        out = bb.forward(pos, tc.constant(feats2)).data
        assert np.allclose(out[0], base[0], atol=1e-12)
        assert not np.allclose(out[1], base[1])


class TestEncoders:
    def test_i2r_per_point_permutation(self):
        rng = np.random.default_rng(4)
        enc = I2REncoder(rng, width=8, heads=2, layers=2, hidden=16, n_points=2)
        n = 5
        feats = rng.standard_normal((n, 8))
        patches = rng.standard_normal((n, 7, 7, 8))
        refs = np.full((n, 2), 3.0)
        out, logits = enc.forward(tc.constant(feats), tc.constant(patches), refs)
        perm = rng.permutation(n)
        out_p, logits_p = enc.forward(tc.constant(feats[perm]),
                                      tc.constant(patches[perm]), refs)
        assert np.allclose(out.data[perm], out_p.data, atol=1e-12)
        assert np.allclose(logits.data[perm], logits_p.data, atol=1e-12)

    def test_i2r_in_box_prob_in_unit_interval(self):
        rng = np.random.default_rng(5)
        enc = I2REncoder(rng, width=8, heads=2, layers=1, hidden=16, n_points=2)
        feats = rng.standard_normal((4, 8)) * 5
        patches = rng.standard_normal((4, 7, 7, 8))
        _, logits = enc.forward(tc.constant(feats), tc.constant(patches),
                                np.full((4, 2), 3.0))
        probs = 1.0 / (1.0 + np.exp(-logits.data))
        assert np.all((probs > 0) & (probs < 1))

    def test_r2i_empty_points_finite(self):
        rng = np.random.default_rng(6)
        enc = R2IEncoder(rng, width=8, heads=2, layers=2, hidden=16)
        out = enc.forward(tc.constant(rng.standard_normal(8)),
                          tc.constant(np.zeros((0, 8))), np.zeros((0, 2)))
        assert out.shape == (8,)
        assert np.all(np.isfinite(out.data))

    def test_r2i_empty_points_reduces_to_mlp_path(self):
        # With zero-initialized output-projection biases, the sink-only
        # attention contributes exactly nothing and each block degenerates
        # to its MLP residual.
        rng = np.random.default_rng(16)
        enc = R2IEncoder(rng, width=8, heads=2, layers=2, hidden=16)
        feat = rng.standard_normal(8)
        got = enc.forward(tc.constant(feat),
                          tc.constant(np.zeros((0, 8))), np.zeros((0, 2)))
        q = tc.add(tc.reshape(tc.constant(feat), (1, 8)),
                   enc.pos(np.zeros((1, 2))))
        for layer in enc.layers:
            g, b = layer["ln_mlp"]
            q = tc.add(q, layer["mlp"](tc.layer_norm(q, g, b)))
        assert np.allclose(got.data, q.data.reshape(8), atol=1e-12)

    def test_i2r_zero_patches_reduce_to_mlp_path(self):
        # Zero patches through zero-initialized biases and sampling layers:
        # the deformable branch is exactly zero, leaving the MLP residuals.
        rng = np.random.default_rng(17)
        enc = I2REncoder(rng, width=8, heads=2, layers=2, hidden=16, n_points=2)
        feats = rng.standard_normal((3, 8))
        patches = tc.constant(np.zeros((3, 7, 7, 8)))
        got, _ = enc.forward(tc.constant(feats), patches, np.full((3, 2), 3.0))
        x = tc.constant(feats)
        for layer in enc.layers:
            g, b = layer["ln_mlp"]
            x = tc.add(x, layer["mlp"](tc.layer_norm(x, g, b)))
        assert np.allclose(got.data, x.data, atol=1e-12)

    def test_r2i_point_permutation_invariant(self):
        rng = np.random.default_rng(7)
        enc = R2IEncoder(rng, width=8, heads=2, layers=2, hidden=16)
        prop = tc.constant(rng.standard_normal(8))
        feats = rng.standard_normal((4, 8))
        rel = rng.standard_normal((4, 2))
        base = enc.forward(prop, tc.constant(feats), rel).data
        perm = rng.permutation(4)
        shuffled = enc.forward(prop, tc.constant(feats[perm]), rel[perm]).data
        assert np.allclose(base, shuffled, atol=1e-9)

    def test_r2i_output_shape(self):
        rng = np.random.default_rng(8)
        enc = R2IEncoder(rng, width=8, heads=2, layers=1, hidden=16)
        for n in (0, 1, 7):
            out = enc.forward(tc.constant(rng.standard_normal(8)),
                              tc.constant(rng.standard_normal((n, 8))),
                              rng.standard_normal((n, 2)))
            assert out.shape == (8,)


class TestDetectionHeads:
    def test_zero_init_neutral_outputs(self):
        rng = np.random.default_rng(9)
        heads = DetectionHeads(rng, width=8, hidden=16, n_classes=3)
        out = heads.forward(tc.constant(rng.standard_normal(8)), 1).to_fusion_output()
        assert out.fusion_score == pytest.approx(0.5)
        assert out.centerness == pytest.approx(0.5)
        assert out.offset_r == 0.0 and out.offset_phi == 0.0 and out.speed == 0.0

    def test_class_heads_differ(self):
        rng = np.random.default_rng(10)
        heads = DetectionHeads(rng, width=8, hidden=16, n_classes=2)
        for w, b in heads.class_heads:
            w.data[...] = rng.standard_normal(w.data.shape)
        feat = tc.constant(rng.standard_normal(8))
        a = heads.forward(feat, 0).to_fusion_output()
        b = heads.forward(feat, 1).to_fusion_output()
        assert a != b

    def test_unknown_class(self):
        rng = np.random.default_rng(11)
        heads = DetectionHeads(rng, width=8, hidden=16, n_classes=2)
        with pytest.raises(ConfigError):
            heads.forward(tc.constant(np.zeros(8)), 5)


class TestDecodeAndScore:
    def _out(self, score=0.9, dr=0.0, dphi=0.0, cness=0.8, speed=0.0):
        return FusionOutput(fusion_score=score, offset_r=dr, offset_phi=dphi,
                            centerness=cness, speed=speed)

    def test_zero_variance_scores_class_conf(self):
        prop = make_proposal([20, 0, 0.8], depth_var=0.0)
        det = decode_and_score(prop, None, 0.3)
        assert det.score == pytest.approx(prop.class_conf)
        assert det.source == SOURCE_CAMERA

    def test_log_two_variance_halves_depth_confidence(self):
        prop = make_proposal([20, 0, 0.8], depth_var=math.log(2.0))
        det = decode_and_score(prop, None, 0.3)
        assert det.score == pytest.approx(0.5 * prop.class_conf)

    def test_geometric_mean_and_velocity(self):
        prop = ImageProposal(
            box=BBox3D(center=np.array([20.0, 0, 0.8]), dims=np.array([2, 4, 1.6]),
                       yaw=math.pi / 2),
            depth_var=0.0, class_conf=0.8, class_id=0, feature=np.zeros(4),
            keypoint=(0, 0), camera_id=0)
        det = decode_and_score(prop, self._out(score=0.5, cness=0.9, speed=5.0), 0.3)
        assert det.score == pytest.approx((0.8 * 0.5 * 0.9) ** (1 / 3))
        assert det.score == pytest.approx(0.7114, abs=2e-4)
        assert np.allclose(det.box.velocity, [0.0, 5.0], atol=1e-12)
        assert det.source == SOURCE_FUSED

    def test_below_threshold_passthrough_bit_identical(self):
        prop = make_proposal([20, 3, 0.8])
        det = decode_and_score(prop, self._out(score=0.29, dr=5.0), 0.3)
        assert det.box is prop.box
        assert det.source == SOURCE_CAMERA

    def test_polar_refinement_recovers_gt_center(self):
        prop = make_proposal([23.0, 4.0, 0.8])
        gt_center = np.array([20.0, 5.0, 0.8])
        pp = cart_to_polar(prop.box.center)
        pg = cart_to_polar(gt_center)
        out = self._out(score=0.9, dr=pg.r - pp.r, dphi=pg.phi - pp.phi)
        det = decode_and_score(prop, out, 0.3)
        assert np.allclose(det.box.center[:2], gt_center[:2], atol=1e-9)

    def test_cartesian_mode_offsets(self):
        prop = make_proposal([20.0, 0.0, 0.8])
        out = self._out(score=0.9, dr=1.0, dphi=-2.0)
        det = decode_and_score(prop, out, 0.3, coord_mode=COORD_CARTESIAN)
        assert np.allclose(det.box.center[:2], [21.0, -2.0])


class TestTargetsAndLosses:
    def test_centerness_at_center_is_one(self):
        gt = BBox3D(center=np.array([10.0, 0, 0.8]), dims=np.array([2, 4, 1.6]),
                    yaw=0.3)
        assert centerness_target(gt.center, gt) == pytest.approx(1.0)

    def test_centerness_outside_is_zero(self):
        gt = BBox3D(center=np.array([10.0, 0, 0.8]), dims=np.array([2, 4, 1.6]),
                    yaw=0.0)
        assert centerness_target(np.array([15.0, 0, 0.8]), gt) == 0.0

    def test_centerness_decreases_with_offset(self):
        gt = BBox3D(center=np.array([10.0, 0, 0.8]), dims=np.array([2, 4, 1.6]),
                    yaw=0.0)
        vals = [centerness_target(gt.center + np.array([dx, 0, 0]), gt)
                for dx in (0.0, 0.5, 1.0, 1.5)]
        assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_targets_gate_and_offsets(self):
        gt = BBox3D(center=np.array([20.0, 0, 0.8]), dims=np.array([2, 4.4, 1.6]),
                    yaw=0.0, velocity=np.array([3.0, 0.0]))
        prop = make_proposal([21.5, 0.2, 0.8])
        positions = np.array([[20.0, 0.0, 0.8],    # inside gt
                              [30.0, 0.0, 0.5]])   # clutter
        assoc = AssociationSet(entries=[np.array([0, 1])])
        targets = compute_targets([prop], [gt], [0], assoc, positions, COORD_POLAR)
        assert targets.has_valid_radar[0]
        assert targets.in_box_labels[0].tolist() == [1.0, 0.0]
        pg, pp = cart_to_polar(gt.center), cart_to_polar(prop.box.center)
        assert targets.gt_offsets[0][0] == pytest.approx(pg.r - pp.r)
        assert targets.gt_speed[0] == pytest.approx(3.0)

    def test_targets_without_match(self):
        prop = make_proposal([21.5, 0.2, 0.8], cls=1)
        gt = BBox3D(center=np.array([20.0, 0, 0.8]), dims=np.array([2, 4, 1.6]),
                    yaw=0.0)
        positions = np.array([[20.0, 0.0, 0.8]])
        assoc = AssociationSet(entries=[np.array([0])])
        targets = compute_targets([prop], [gt], [0], assoc, positions, COORD_POLAR)
        # Class mismatch: no gt match, so no valid radar and zero labels.
        assert not targets.has_valid_radar[0]
        assert targets.in_box_labels[0].tolist() == [0.0]

    def _head_outputs(self, score_logit, cness_logit=0.0, offset=(0.0, 0.0),
                      speed=0.0):
        return type("H", (), {
            "score_logit": tc.constant([score_logit]),
            "offset": tc.constant(list(offset)),
            "centerness_logit": tc.constant([cness_logit]),
            "speed": tc.constant([speed]),
        })()

    def test_loss_gating(self):
        targets = TrainingTargets(
            has_valid_radar=np.array([False]),
            in_box_labels=[np.zeros(0)],
            gt_offsets=np.zeros((1, 2)), gt_centerness=np.zeros(1),
            gt_speed=np.zeros(1), matched_gt=[None])
        breakdown = compute_losses([self._head_outputs(0.0)],
                                   [tc.constant(np.zeros(0))], targets)
        # Only the fusion BCE survives: -log sigmoid(0) = log 2.
        assert breakdown.total.item() == pytest.approx(math.log(2.0))
        assert breakdown.centerness_bce == 0.0 and breakdown.offset_l1 == 0.0

    def test_loss_half_score_against_one(self):
        targets = TrainingTargets(
            has_valid_radar=np.array([True]),
            in_box_labels=[np.zeros(0)],
            gt_offsets=np.zeros((1, 2)), gt_centerness=np.array([0.5]),
            gt_speed=np.zeros(1), matched_gt=[0])
        breakdown = compute_losses([self._head_outputs(0.0)],
                                   [tc.constant(np.zeros(0))], targets)
        # fusion BCE(0 logit, target 1) = ln 2; centerness BCE(0, 0.5) = ln 2.
        assert breakdown.fusion_bce == pytest.approx(math.log(2.0))
        assert breakdown.total.item() == pytest.approx(2 * math.log(2.0))

    def test_perfect_predictions_near_zero_loss(self):
        targets = TrainingTargets(
            has_valid_radar=np.array([True]),
            in_box_labels=[np.array([1.0, 0.0])],
            gt_offsets=np.array([[0.5, 0.01]]), gt_centerness=np.array([1.0]),
            gt_speed=np.array([2.0]), matched_gt=[0])
        head = self._head_outputs(30.0, cness_logit=30.0, offset=(0.5, 0.01),
                                  speed=2.0)
        logits = tc.constant([30.0, -30.0])
        breakdown = compute_losses([head], [logits], targets)
        assert breakdown.total.item() == pytest.approx(0.0, abs=1e-8)


class TestFusionModelForward:
    def test_empty_associations_and_proposals(self):
        arch = desk_arch(width=8, heads=2, layers=1, mlp_hidden=8,
                         backbone_stages=((2.0, 2, (8,)),), n_points=2)
        model = FusionModel(arch, seed=0)
        rng = np.random.default_rng(0)
        inputs = FrameInputs(
            positions=rng.uniform(-10, 10, (6, 3)),
            features=rng.standard_normal((6, 4)),
            valid=np.ones(6, dtype=bool),
            proposals=[make_proposal([15, 0, 0.8], width=8)],
            feature_maps=[rng.standard_normal((6, 8, 8))],
            point_feat_xy=rng.uniform(0, 6, (1, 6, 2)),
        )
        assoc = AssociationSet(entries=[np.zeros(0, dtype=np.int64)])
        out = model.forward_frame(inputs, assoc)
        assert len(out) == 1
        assert out[0].in_box_logits.size == 0
        assert np.all(np.isfinite(out[0].head.score_logit.data))

    def test_state_dict_round_trip(self, tmp_path):
        arch = desk_arch(width=8, heads=2, layers=1, mlp_hidden=8,
                         backbone_stages=((2.0, 2, (8,)),), n_points=2)
        model = FusionModel(arch, seed=1)
        state = model.state_dict()
        other = FusionModel(arch, seed=2)
        assert not np.allclose(
            model.heads.shared.w1.data, other.heads.shared.w1.data)
        other.load_state_dict(state)
        for p, q in zip(model.parameters(), other.parameters()):
            assert np.array_equal(p.data, q.data)
