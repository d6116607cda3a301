"""Full lifting network: embeddings, dual GCNs, cross-attention, fusion, encoder, head."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from . import autodiff as ad
from .attention import EmaState, cross_attention_forward
from .encoder import distance_rescale, encoder_layer_forward
from .fusion import FUSION_MODES, dynamic_fusion
from .gcn import bone_adjacencies, bone_gcn_forward, joint_gcn_forward, normalize_pose2d
from .skeleton import (
    SkeletonTopology,
    bone_directions,
    build_bone_graph,
    h36m_topology,
    hop_distance_matrix,
    horizontal_flip,
    joint_adjacency,
    normalized_adjacency,
)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    num_joints: int = 17
    dim: int = 512
    heads: int = 8
    layers: int = 6
    cross_layers: int = 2
    gcn_depth: int = 2
    mu: int = 4
    w: float = 1.0
    beta: float = 0.99
    combine_mode: str = "sum"
    ffn_width: int = 0  # 0 -> 2 * dim
    enable_bone_gcn: bool = True
    fusion_mode: str = "dynamic"
    layer_norm: bool = False
    distance_source: str = "hops"  # or "adjacency"
    output_scale: float = 1000.0  # head predicts metres, outputs are mm
    image_width: float = 1000.0
    image_height: float = 1000.0

    @property
    def ffn(self) -> int:
        return self.ffn_width or 2 * self.dim

    def validate(self) -> "ModelConfig":
        for name in ("num_joints", "dim", "heads", "layers", "cross_layers"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.gcn_depth < 0:
            raise ConfigError("gcn_depth must be >= 0")
        if self.dim % self.heads:
            raise ConfigError(f"D not divisible by H (D={self.dim}, H={self.heads})")
        if self.ffn < self.dim:
            raise ConfigError(f"ffn_width {self.ffn} smaller than D={self.dim}")
        if not 0 <= self.mu <= self.num_joints:
            raise ConfigError(f"mu={self.mu} outside [0, {self.num_joints}]")
        if self.combine_mode not in ("sum", "concat_project"):
            raise ConfigError(f"unknown combine_mode {self.combine_mode!r}")
        if self.fusion_mode not in FUSION_MODES:
            raise ConfigError(f"unknown fusion_mode {self.fusion_mode!r}")
        if self.distance_source not in ("hops", "adjacency"):
            raise ConfigError(f"unknown distance_source {self.distance_source!r}")
        if not 0.0 <= self.beta <= 1.0:
            raise ConfigError("beta must lie in [0, 1]")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d).validate()


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> ad.Tensor:
    bound = np.sqrt(1.0 / fan_in)
    return ad.Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def init_params(cfg: ModelConfig, seed: int = 0) -> dict[str, ad.Tensor]:
    """Uniform(+-sqrt(1/fan_in)) init in a fixed name order."""
    rng = np.random.default_rng(seed)
    d, f = cfg.dim, cfg.ffn
    p: dict[str, ad.Tensor] = {}

    def lin(name, fan_in, fan_out, bias=True):
        p[f"{name}.w"] = _uniform(rng, (fan_in, fan_out), fan_in)
        if bias:
            p[f"{name}.b"] = _uniform(rng, (fan_out,), fan_in)

    lin("embed.joint", 2, d)
    for l in range(cfg.gcn_depth):
        lin(f"jgcn.{l}.theta", d, d, bias=False)
    if cfg.enable_bone_gcn:
        lin("embed.bone", 2, d)
        for l in range(cfg.gcn_depth):
            lin(f"bgcn.{l}.theta_w", d, d, bias=False)
            lin(f"bgcn.{l}.theta_a", d, d, bias=False)
            if cfg.combine_mode == "concat_project":
                lin(f"bgcn.{l}.proj", 2 * d, d, bias=False)
    for k in range(cfg.cross_layers):
        for m in ("wq", "wk", "wv", "wo"):
            lin(f"xattn.{k}.{m}", d, d, bias=False)
        lin(f"xattn.{k}.ffn1", d, 2 * d)
        lin(f"xattn.{k}.ffn2", 2 * d, d)
    for l in range(cfg.layers):
        for m in ("wq", "wk", "wv", "wo"):
            lin(f"enc.{l}.{m}", d, d, bias=False)
        lin(f"enc.{l}.ffn1", d, f)
        lin(f"enc.{l}.ffn2", f, f)
        lin(f"enc.{l}.ffn3", f, d)
    lin("head", d, 3)
    for name, t in p.items():
        t.name = name
    return p


class PoseGrafModel:
    def __init__(self, cfg: ModelConfig, topo: SkeletonTopology | None = None, seed: int = 0):
        topo = topo or h36m_topology()
        if cfg.num_joints != topo.num_joints:
            cfg = replace(cfg, num_joints=topo.num_joints)
        self.cfg = cfg.validate()
        self.topo = topo
        self.bones = build_bone_graph(topo)
        self.params = init_params(self.cfg, seed)
        self.joint_adj = normalized_adjacency(joint_adjacency(topo), True)
        self.bone_adj = normalized_adjacency(self.bones.binary_adjacency, True)
        self.hops = hop_distance_matrix(topo)
        src = self.hops if cfg.distance_source == "hops" else joint_adjacency(topo)
        self.distance_bias = distance_rescale(src, cfg.w)
        n = topo.num_joints
        self.center = np.eye(n) - np.eye(n)[[topo.root], :]  # subtracts the root row from every row
        self._groups = {}

    # parameter views grouped per layer
    def _layer(self, prefix: str) -> dict:
        if prefix in self._groups:
            return self._groups[prefix]
        out = self._groups[prefix] = {}
        for name, t in self.params.items():
            if name.startswith(prefix + "."):
                key = name[len(prefix) + 1 :]
                key = {"wq.w": "wq", "wk.w": "wk", "wv.w": "wv", "wo.w": "wo",
                       "ffn1.w": "w1", "ffn1.b": "b1", "ffn2.w": "w2", "ffn2.b": "b2",
                       "ffn3.w": "w3", "ffn3.b": "b3"}.get(key, key)
                out[key] = t
        return out

    def forward(self, pose2d, trace: dict | None = None) -> ad.Tensor:
        """Pixel keypoints (B, N, 2) or (N, 2) -> root-relative 3D joints in mm."""
        cfg, p = self.cfg, self.params
        pose2d = np.asarray(pose2d, dtype=np.float64)
        single = pose2d.ndim == 2
        if single:
            pose2d = pose2d[None]
        if pose2d.shape[1:] != (self.topo.num_joints, 2):
            raise ValueError(f"expected (B, {self.topo.num_joints}, 2) keypoints, got {pose2d.shape}")
        batch, n = pose2d.shape[:2]
        x2d = normalize_pose2d(pose2d, self.topo, (cfg.image_width, cfg.image_height))

        dirs = bone_directions(pose2d, self.bones)
        xj = ad.add(ad.matmul(ad.Tensor(x2d), p["embed.joint.w"]), p["embed.joint.b"])
        for l in range(cfg.gcn_depth):
            xj = joint_gcn_forward(xj, self.joint_adj, p[f"jgcn.{l}.theta.w"])

        xb = None
        if cfg.enable_bone_gcn:
            norm_w, norm_a = bone_adjacencies(dirs, self.bones)
            xb = ad.add(ad.matmul(ad.Tensor(dirs.directions), p["embed.bone.w"]), p["embed.bone.b"])
            for l in range(cfg.gcn_depth):
                proj = p.get(f"bgcn.{l}.proj.w")
                xb = bone_gcn_forward(xb, norm_w, norm_a, p[f"bgcn.{l}.theta_w.w"],
                                      p[f"bgcn.{l}.theta_a.w"], cfg.combine_mode, proj)
            tokens = ad.concat([xj, xb], axis=1)
        else:
            tokens = xj

        xattn = [self._layer(f"xattn.{k}") for k in range(cfg.cross_layers)]
        x_jc, x_bc, scores = cross_attention_forward(
            tokens, xattn, n, cfg.heads, EmaState(beta=cfg.beta))
        x = dynamic_fusion(x_jc, xb, scores, self.topo, cfg.mu, cfg.fusion_mode)
        if trace is not None:
            trace.update(x_jc=x_jc, x_bc=x_bc, x_b=xb, scores=scores, x_df=x, tokens=tokens)

        for l in range(cfg.layers):
            x = encoder_layer_forward(x, self.distance_bias, x_jc, self._layer(f"enc.{l}"),
                                      cfg.heads, cfg.layer_norm)
        out = ad.add(ad.matmul(x, p["head.w"]), p["head.b"])
        out = ad.matmul(self.center, ad.scale(out, cfg.output_scale))
        if single:
            out = ad.reshape(out, out.shape[1:])
        return out

    def predict(self, pose2d) -> np.ndarray:
        """Forward pass without recording a tape."""
        with ad.no_tape():
            return self.forward(pose2d).data

    def parameters(self) -> list[ad.Tensor]:
        return list(self.params.values())

    def num_parameters(self) -> int:
        return int(sum(t.data.size for t in self.params.values()))


def loss_mpjpe(pred, gt) -> ad.Tensor:
    """Mean Euclidean joint distance over (Z, N, 3) batches; uses sqrt(x + 1e-12)."""
    pred, gt = ad.as_tensor(pred), ad.as_tensor(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"prediction shape {pred.shape} != target shape {gt.shape}")
    diff = ad.sub(pred, gt)
    return ad.mean(ad.sqrt_eps(ad.sum(ad.mul(diff, diff), axis=-1)))


def predict_with_flip_ensemble(model, pose2d, topo: SkeletonTopology) -> np.ndarray:
    """Average of the plain prediction and the un-flipped prediction of the flipped input."""
    fn = model.predict if hasattr(model, "predict") else model
    plain = np.asarray(fn(pose2d))
    mirrored = horizontal_flip(np.asarray(fn(horizontal_flip(pose2d, topo))), topo)
    return 0.5 * (plain + mirrored)
