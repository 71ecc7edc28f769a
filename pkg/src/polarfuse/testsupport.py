"""Gradient-check fixtures: per-op finite-difference suites and a tiny
end-to-end fusion instance (2 proposals, 8 radar points) small enough to
difference every parameter coordinate."""

from __future__ import annotations

import numpy as np

from . import tensorcore as tc
from .association import AssociationSet
from .fusion.losses import compute_losses
from .fusion.model import FrameInputs, FusionModel, desk_arch
from .fusion.patches import PatchConfig
from .fusion.targets import TrainingTargets
from .geometry import BBox3D
from .proposals import ImageProposal


def _away_from(x: np.ndarray, kink: float = 0.0, margin: float = 1e-3) -> np.ndarray:
    """Push values off a kink so central differences stay two-sided."""
    shift = np.where(np.abs(x - kink) < margin, margin * np.sign(x - kink + 1e-12), 0.0)
    return x + shift


def op_gradchecks(quick: bool = False) -> dict[str, float]:
    rng = np.random.default_rng(42)
    n, m, c = (2, 3, 4) if quick else (3, 5, 8)
    results: dict[str, float] = {}

    def check(name, build, params):
        results[name] = tc.finite_difference_check(build, params)

    x = tc.Parameter(rng.standard_normal((n, c)), "x")
    w = tc.Parameter(rng.standard_normal((c, m)), "w")
    b = tc.Parameter(rng.standard_normal(m), "b")
    check("linear", lambda: tc.sum_(tc.mul(tc.linear(x, w, b), tc.linear(x, w, b))),
          [x, w, b])

    xr = tc.Parameter(_away_from(rng.standard_normal((n, c))), "xr")
    probe = tc.constant(rng.standard_normal((n, c)))
    check("relu", lambda: tc.sum_(tc.relu(xr)), [xr])
    check("sigmoid", lambda: tc.sum_(tc.mul(tc.sigmoid(xr), tc.sigmoid(xr))), [xr])
    check("softmax", lambda: tc.sum_(tc.mul(tc.softmax(xr), probe)), [xr])
    check("absolute", lambda: tc.sum_(tc.absolute(xr)), [xr])

    g = tc.Parameter(rng.standard_normal(c), "g")
    be = tc.Parameter(rng.standard_normal(c), "be")
    check("layer_norm", lambda: tc.sum_(tc.mul(tc.layer_norm(x, g, be),
                                               tc.layer_norm(x, g, be))), [x, g, be])

    a3 = tc.Parameter(rng.standard_normal((2, n, c)), "a3")
    b3 = tc.Parameter(rng.standard_normal((2, c, m)), "b3")
    check("matmul_batched", lambda: tc.sum_(tc.matmul(a3, b3)), [a3, b3])

    xm = tc.Parameter(rng.standard_normal((n, m)) + np.arange(m) * 0.01, "xm")
    check("max_axis", lambda: tc.sum_(tc.max_(xm, axis=1)), [xm])
    check("mean", lambda: tc.mean(tc.mul(xm, xm)), [xm])

    logits = tc.Parameter(rng.standard_normal((n, m)), "logits")
    targets = rng.integers(0, 2, size=(n, m)).astype(np.float64)
    check("bce_with_logits", lambda: tc.sum_(tc.bce_with_logits(logits, targets)),
          [logits])

    idx = np.array([0, 1, 1, n - 1])
    check("take_rows_dup", lambda: tc.sum_(tc.mul(tc.take_rows(x, idx),
                                                  tc.take_rows(x, idx))), [x])
    check("take_last", lambda: tc.sum_(tc.take_last(x, 1, c - 1)), [x])
    check("concat", lambda: tc.sum_(tc.mul(tc.concat([x, x], axis=0),
                                           tc.concat([x, x], axis=0))), [x])

    fmap = tc.Parameter(rng.standard_normal((5, 6, c)), "fmap")
    locs = tc.Parameter(rng.uniform(0.3, 3.4, size=(4, 2)) + 0.17, "locs")
    check("bilinear_sample", lambda: tc.sum_(tc.mul(
        tc.bilinear_sample(fmap, locs), tc.bilinear_sample(fmap, locs))),
        [fmap, locs])
    fmaps = tc.Parameter(rng.standard_normal((3, 5, 5, c)), "fmaps")
    locs_b = tc.Parameter(rng.uniform(0.3, 3.4, size=(3, 2, 2)) + 0.21, "locs_b")
    check("bilinear_sample_batched", lambda: tc.sum_(tc.mul(
        tc.bilinear_sample_batched(fmaps, locs_b),
        tc.bilinear_sample_batched(fmaps, locs_b))), [fmaps, locs_b])

    heads = 2
    q = tc.Parameter(rng.standard_normal((n, c)), "q")
    kv = tc.Parameter(rng.standard_normal((m, c)), "kv")
    mha = tc.init_mha_params(rng, c, "mha")
    check("mh_cross_attention", lambda: tc.sum_(tc.mul(
        tc.mh_cross_attention(q, kv, mha, heads),
        tc.mh_cross_attention(q, kv, mha, heads))), [q, kv] + mha.parameters())
    check("mh_cross_attention_sink", lambda: tc.sum_(tc.mul(
        tc.mh_cross_attention(q, kv, mha, heads, zero_sink=True),
        tc.mh_cross_attention(q, kv, mha, heads, zero_sink=True))),
        [q, kv] + mha.parameters())

    dmca = tc.init_deformable_params(rng, c, heads, 3, "dmca")
    dmca.w_offset.data += rng.standard_normal(dmca.w_offset.data.shape) * 0.1
    dmca.b_offset.data += rng.uniform(0.05, 0.35, dmca.b_offset.data.shape)
    dmca.w_weight.data += rng.standard_normal(dmca.w_weight.data.shape) * 0.1
    refs = rng.uniform(1.2, 3.3, size=(n, 2)) + 0.13
    check("deformable_cross_attention", lambda: tc.sum_(tc.mul(
        tc.deformable_cross_attention(q, refs, fmap, dmca, heads, 3),
        tc.deformable_cross_attention(q, refs, fmap, dmca, heads, 3))),
        [q, fmap] + dmca.parameters())

    return results


def tiny_fusion_instance(seed: int = 7):
    """A 2-proposal / 8-point fusion loss whose graph reaches every parameter."""
    rng = np.random.default_rng(seed)
    arch = desk_arch(
        width=8, heads=2, layers=1, mlp_hidden=8, n_points=2, n_classes=2,
        backbone_stages=((2.0, 2, (8,)), (4.0, 2, (8,))),
        patch=PatchConfig(out_size=5),
    )
    model = FusionModel(arch, seed=seed)
    # Nudge zero-initialized layers so the finite-difference point is generic.
    for p in model.parameters():
        if np.all(p.data == 0):
            p.data += rng.normal(0.0, 0.05, p.data.shape)

    k = 8
    positions = rng.uniform(-4, 4, size=(k, 3))
    positions[:, 2] = rng.uniform(0, 2, size=k)
    features = rng.standard_normal((k, 4))
    fmap = rng.standard_normal((6, 9, arch.width))
    point_xy = rng.uniform(0.7, 4.2, size=(1, k, 2))

    def make_box(center):
        return BBox3D(center=np.array(center), dims=np.array([1.5, 3.0, 1.5]),
                      yaw=0.4, velocity=np.array([1.0, 0.0]))

    proposals = [
        ImageProposal(box=make_box([2.5, 0.5, 0.7]), depth_var=0.2, class_conf=0.9,
                      class_id=0, feature=rng.standard_normal(arch.width),
                      keypoint=(3.0, 2.0), camera_id=0),
        ImageProposal(box=make_box([-2.0, 1.5, 0.7]), depth_var=0.4, class_conf=0.8,
                      class_id=1, feature=rng.standard_normal(arch.width),
                      keypoint=(5.0, 3.0), camera_id=0),
    ]
    assoc = AssociationSet(entries=[np.array([0, 1, 2, 3, 4]),
                                    np.array([4, 5, 6, 7])])
    inputs = FrameInputs(
        positions=positions, features=features, valid=np.ones(k, dtype=bool),
        proposals=proposals, feature_maps=[fmap], point_feat_xy=point_xy,
    )
    targets = TrainingTargets(
        has_valid_radar=np.array([True, False]),
        in_box_labels=[np.array([1.0, 0.0, 1.0, 0.0, 1.0]),
                       np.array([0.0, 0.0, 0.0, 0.0])],
        gt_offsets=np.array([[0.8, 0.05], [0.0, 0.0]]),
        gt_centerness=np.array([0.7, 0.0]),
        gt_speed=np.array([1.2, 0.0]),
        matched_gt=[0, None],
    )

    def build_loss():
        forwards = model.forward_frame(inputs, assoc)
        return compute_losses([f.head for f in forwards],
                              [f.in_box_logits for f in forwards], targets).total

    return build_loss, model


def gradcheck_suite(quick: bool = False) -> dict[str, float]:
    results = op_gradchecks(quick=quick)
    build_loss, model = tiny_fusion_instance()
    results["end_to_end_fusion_loss"] = tc.finite_difference_check(
        build_loss, model.parameters())
    return results
