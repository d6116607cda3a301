"""Central finite-difference checks of the reverse-mode gradients."""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .attention import cross_attention_forward
from .encoder import distance_rescale, encoder_layer_forward
from .fusion import dynamic_fusion
from .gcn import bone_adjacencies, bone_gcn_forward, joint_gcn_forward
from .model import ModelConfig, PoseGrafModel, loss_mpjpe
from .skeleton import (
    bone_directions,
    build_bone_graph,
    chain_topology,
    hop_distance_matrix,
    joint_adjacency,
    normalized_adjacency,
)

FD_EPS = 1e-5
# relative errors are taken against max(|analytic|, |numeric|, REL_FLOOR)
REL_FLOOR = 1e-6


def toy_config() -> ModelConfig:
    return ModelConfig(num_joints=5, dim=8, heads=2, layers=1, cross_layers=1, mu=2, output_scale=1.0)


def numeric_grad(f, t: ad.Tensor, eps: float = FD_EPS) -> np.ndarray:
    g = np.zeros_like(t.data)
    flat, gflat = t.data.reshape(-1), g.reshape(-1)
    with ad.no_tape():
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + eps
            fp = float(f().data)
            flat[i] = old - eps
            fm = float(f().data)
            flat[i] = old
            gflat[i] = (fp - fm) / (2 * eps)
    return g


def rel_error(analytic, numeric, floor: float = REL_FLOOR) -> float:
    a = np.asarray(analytic if analytic is not None else 0.0, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    a = np.broadcast_to(a, n.shape)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom)) if n.size else 0.0


def check(f, tensors: dict[str, ad.Tensor], eps: float = FD_EPS) -> dict[str, float]:
    """Max relative error per named tensor for the scalar function ``f()``."""
    for t in tensors.values():
        t.requires_grad = True
        t.grad = None
    with ad.Tape() as tape:
        tape.backward(f())
    return {k: rel_error(t.grad, numeric_grad(f, t, eps)) for k, t in tensors.items()}


def _projected(out: ad.Tensor, rng) -> ad.Tensor:
    r = rng.normal(size=out.shape)
    return ad.sum(ad.mul(out, r))


def _rand(rng, *shape, scale=1.0):
    return ad.Tensor(rng.normal(size=shape) * scale, requires_grad=True)


def check_autodiff(seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    a, b = _rand(rng, 3, 4), _rand(rng, 4, 2)
    x = _rand(rng, 2, 3, 5)
    y = ad.Tensor(rng.uniform(0.5, 2.0, size=(2, 3, 5)), requires_grad=True)
    errs = []
    errs += check(lambda: _projected(ad.matmul(a, b), np.random.default_rng(1)), {"a": a, "b": b}).values()
    for fn in (ad.gelu, ad.softmax_rows, lambda t: ad.leaky_relu(t, 0.01), ad.relu, ad.layer_norm,
               lambda t: ad.sqrt_eps(ad.mul(t, t)), lambda t: ad.mean(t, axis=-1, keepdims=True)):
        errs += check(lambda fn=fn: _projected(fn(x), np.random.default_rng(2)), {"x": x}).values()
    errs += check(lambda: _projected(ad.div(x, y), np.random.default_rng(3)), {"x": x, "y": y}).values()
    errs += check(lambda: _projected(ad.concat(ad.split(x, [1, 4], axis=-1)[::-1], axis=-1),
                                     np.random.default_rng(4)), {"x": x}).values()
    return max(errs)


def check_gcn(seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    topo = chain_topology(5)
    bones = build_bone_graph(topo)
    adj = normalized_adjacency(joint_adjacency(topo), True)
    dirs = bone_directions(rng.normal(size=(5, 2)), bones)
    nw, na = bone_adjacencies(dirs, bones)
    xj, xb = _rand(rng, 5, 8), _rand(rng, 4, 8)
    tj, tw, ta = (_rand(rng, 8, 8, scale=0.5) for _ in range(3))
    proj = _rand(rng, 16, 8, scale=0.3)
    e1 = check(lambda: _projected(joint_gcn_forward(xj, adj, tj), np.random.default_rng(1)), {"x": xj, "theta": tj})
    e2 = check(lambda: _projected(bone_gcn_forward(xb, nw, na, tw, ta), np.random.default_rng(2)),
               {"x": xb, "tw": tw, "ta": ta})
    e3 = check(lambda: _projected(bone_gcn_forward(xb, nw, na, tw, ta, "concat_project", proj),
                                  np.random.default_rng(3)), {"x": xb, "proj": proj})
    return max(*e1.values(), *e2.values(), *e3.values())


def _attn_layer(rng, d, ffn=None, scale=0.4):
    ffn = ffn or 2 * d
    p = {k: _rand(rng, d, d, scale=scale) for k in ("wq", "wk", "wv", "wo")}
    p.update(w1=_rand(rng, d, ffn, scale=scale), b1=_rand(rng, ffn, scale=0.1),
             w2=_rand(rng, ffn, d, scale=scale), b2=_rand(rng, d, scale=0.1))
    return p


def check_attention(seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    tokens = _rand(rng, 9, 8)
    p = _attn_layer(rng, 8)

    def f():
        x_jc, x_bc, _ = cross_attention_forward(tokens, [p], 5, 2)
        r = np.random.default_rng(1)
        return ad.add(_projected(x_jc, r), _projected(x_bc, r))

    return max(check(f, {"tokens": tokens, **p}).values())


def check_fusion(seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    topo = chain_topology(5)
    x_jc, x_b = _rand(rng, 5, 8), _rand(rng, 4, 8)
    scores = rng.random(5)
    errs = []
    for mode in ("dynamic", "static", "off"):
        f = lambda mode=mode: _projected(dynamic_fusion(x_jc, x_b, scores, topo, 2, mode), np.random.default_rng(1))
        errs += check(f, {"x_jc": x_jc, "x_b": x_b}).values()
    return max(errs)


def check_encoder(seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    topo = chain_topology(5)
    bias = distance_rescale(hop_distance_matrix(topo), 1.0)
    x, x_jc = _rand(rng, 5, 8), _rand(rng, 5, 8)
    p = {k: _rand(rng, 8, 8, scale=0.5) for k in ("wq", "wk", "wv", "wo")}
    p.update(w1=_rand(rng, 8, 16, scale=0.4), b1=_rand(rng, 16, scale=0.1),
             w2=_rand(rng, 16, 16, scale=0.3), b2=_rand(rng, 16, scale=0.1),
             w3=_rand(rng, 16, 8, scale=0.3), b3=_rand(rng, 8, scale=0.1))
    errs = []
    for ln in (False, True):
        f = lambda ln=ln: _projected(encoder_layer_forward(x, bias, x_jc, p, 2, ln), np.random.default_rng(1))
        errs += check(f, {"x": x, "x_jc": x_jc, **p}).values()
    return max(errs)


def toy_problem(seed: int = 0, cfg: ModelConfig | None = None):
    rng = np.random.default_rng(seed)
    model = PoseGrafModel(cfg or toy_config(), chain_topology(5), seed=seed)
    x = rng.normal(size=(2, 5, 2)) * 150.0
    y = rng.normal(size=(2, 5, 3))
    y -= y[:, :1]
    return model, x, y


def check_model(seed: int = 0, cfg: ModelConfig | None = None) -> dict[str, float]:
    """Per-parameter max relative error of d loss_mpjpe / d param on the toy problem."""
    model, x, y = toy_problem(seed, cfg)
    return check(lambda: loss_mpjpe(model.forward(x), y), model.params)


def run_suite(seed: int = 0) -> dict[str, float]:
    return {
        "autodiff": check_autodiff(seed),
        "gcn": check_gcn(seed),
        "attention": check_attention(seed),
        "fusion": check_fusion(seed),
        "encoder": check_encoder(seed),
        "model": max(check_model(seed).values()),
    }
