"""The two halves of the fusion transformer.

Image-to-radar: each radar point attends into its own image patch through
deformable sampling attention (pre-norm residual blocks), and an auxiliary
head predicts whether the point sits inside the object box.

Radar-to-image: the proposal feature attends over its associated radar
point features (pre-norm cross-attention with a zero sink) using learned
positional embeddings of point coordinates relative to the proposal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import tensorcore as tc
from ..tensorcore import Parameter


def _linear_params(rng, n_in, n_out, name) -> tuple[Parameter, Parameter]:
    scale = math.sqrt(1.0 / n_in)
    w = Parameter(rng.uniform(-scale, scale, size=(n_in, n_out)), f"{name}/w")
    b = Parameter(np.zeros(n_out), f"{name}/b")
    return w, b


def _norm_params(rng, width, name) -> tuple[Parameter, Parameter]:
    return (Parameter(np.ones(width), f"{name}/g"),
            Parameter(np.zeros(width), f"{name}/b"))


@dataclass
class Mlp:
    """2-layer MLP with relu: width -> hidden -> width."""

    w1: Parameter
    b1: Parameter
    w2: Parameter
    b2: Parameter

    @staticmethod
    def init(rng, width, hidden, name, out=None) -> "Mlp":
        w1, b1 = _linear_params(rng, width, hidden, f"{name}/fc1")
        w2, b2 = _linear_params(rng, hidden, out if out is not None else width, f"{name}/fc2")
        return Mlp(w1, b1, w2, b2)

    def __call__(self, x: tc.Tensor) -> tc.Tensor:
        return tc.linear(tc.relu(tc.linear(x, self.w1, self.b1)), self.w2, self.b2)

    def parameters(self) -> list[Parameter]:
        return [self.w1, self.b1, self.w2, self.b2]


class PositionalEmbed:
    """Learned embedding of 2-d relative coordinates into the fusion width."""

    def __init__(self, rng, width, hidden, prefix):
        self.mlp = Mlp.init(rng, 2, hidden, f"{prefix}/pos", out=width)

    def __call__(self, rel: np.ndarray) -> tc.Tensor:
        return self.mlp(tc.constant(np.asarray(rel, dtype=np.float64).reshape(-1, 2)))

    def parameters(self) -> list[Parameter]:
        return self.mlp.parameters()


class I2REncoder:
    def __init__(self, rng, width: int, heads: int, layers: int, hidden: int,
                 n_points: int, prefix: str = "i2r"):
        self.width = width
        self.heads = heads
        self.n_points = n_points
        self.patch_w, self.patch_b = _linear_params(rng, width, width, f"{prefix}/patch_proj")
        self.layers = []
        for i in range(layers):
            self.layers.append({
                "ln_attn": _norm_params(rng, width, f"{prefix}/l{i}/ln_attn"),
                "dmca": tc.init_deformable_params(rng, width, heads, n_points,
                                                  f"{prefix}/l{i}/dmca"),
                "ln_mlp": _norm_params(rng, width, f"{prefix}/l{i}/ln_mlp"),
                "mlp": Mlp.init(rng, width, hidden, f"{prefix}/l{i}/mlp"),
            })
        self.aux = Mlp.init(rng, width, hidden, f"{prefix}/aux", out=1)

    def parameters(self) -> list[Parameter]:
        out = [self.patch_w, self.patch_b]
        for layer in self.layers:
            out += list(layer["ln_attn"]) + layer["dmca"].parameters()
            out += list(layer["ln_mlp"]) + layer["mlp"].parameters()
        return out + self.aux.parameters()

    def forward(self, radar_feats: tc.Tensor, patches: tc.Tensor,
                refs: np.ndarray) -> tuple[tc.Tensor, tc.Tensor]:
        """radar_feats [n, C]; patches [n, p, p, C]; refs [n, 2] patch pixels.

        Returns (encoded features [n, C], in-box logits [n]).
        """
        proj = tc.linear(patches, self.patch_w, self.patch_b)
        x = radar_feats
        for layer in self.layers:
            g, b = layer["ln_attn"]
            attended = tc.deformable_cross_attention(
                tc.layer_norm(x, g, b), refs, proj, layer["dmca"],
                self.heads, self.n_points)
            x = tc.add(x, attended)
            g, b = layer["ln_mlp"]
            x = tc.add(x, layer["mlp"](tc.layer_norm(x, g, b)))
        logits = tc.reshape(self.aux(x), (x.shape[0],))
        return x, logits


class R2IEncoder:
    def __init__(self, rng, width: int, heads: int, layers: int, hidden: int,
                 prefix: str = "r2i"):
        self.width = width
        self.heads = heads
        self.pos = PositionalEmbed(rng, width, hidden, prefix)
        self.layers = []
        for i in range(layers):
            self.layers.append({
                "ln_q": _norm_params(rng, width, f"{prefix}/l{i}/ln_q"),
                "ln_kv": _norm_params(rng, width, f"{prefix}/l{i}/ln_kv"),
                "mha": tc.init_mha_params(rng, width, f"{prefix}/l{i}/mha"),
                "ln_mlp": _norm_params(rng, width, f"{prefix}/l{i}/ln_mlp"),
                "mlp": Mlp.init(rng, width, hidden, f"{prefix}/l{i}/mlp"),
            })

    def parameters(self) -> list[Parameter]:
        out = self.pos.parameters()
        for layer in self.layers:
            out += list(layer["ln_q"]) + list(layer["ln_kv"])
            out += layer["mha"].parameters()
            out += list(layer["ln_mlp"]) + layer["mlp"].parameters()
        return out

    def forward(self, proposal_feat: tc.Tensor, radar_feats: tc.Tensor,
                rel_coords: np.ndarray) -> tc.Tensor:
        """proposal_feat [C]; radar_feats [n, C] (n may be 0); rel_coords [n, 2].

        Coordinates are (r, phi) or (x, y) offsets from the proposal center,
        depending on the configured coordinate mode.
        """
        q = tc.add(tc.reshape(proposal_feat, (1, self.width)),
                   self.pos(np.zeros((1, 2))))
        kv = tc.add(radar_feats, self.pos(rel_coords.reshape(-1, 2)))
        for layer in self.layers:
            gq, bq = layer["ln_q"]
            gk, bk = layer["ln_kv"]
            attended = tc.mh_cross_attention(
                tc.layer_norm(q, gq, bq), tc.layer_norm(kv, gk, bk),
                layer["mha"], self.heads, zero_sink=True)
            q = tc.add(q, attended)
            g, b = layer["ln_mlp"]
            q = tc.add(q, layer["mlp"](tc.layer_norm(q, g, b)))
        return tc.reshape(q, (self.width,))
