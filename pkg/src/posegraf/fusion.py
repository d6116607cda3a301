"""Top-mu seed selection and BFS reconstruction of joint features from bone features."""
from __future__ import annotations

from collections import deque
from functools import lru_cache

import numpy as np

from . import autodiff as ad
from .skeleton import SkeletonTopology, build_bone_graph

FUSION_MODES = ("dynamic", "static", "off")


def filter_top_mu(scores, mu: int) -> list[int]:
    """Indices of the ``mu`` largest scores, descending; ties go to the smaller index."""
    s = np.asarray(scores, dtype=np.float64)
    if not 0 <= mu <= s.shape[-1]:
        raise ValueError(f"mu={mu} outside [0, {s.shape[-1]}]")
    order = sorted(range(s.shape[-1]), key=lambda i: (-s[i], i))
    return order[:mu]


def _bfs_edges(topo: SkeletonTopology, seed: int, order: str = "ascending"):
    """Yield (u, v) tree edges in BFS discovery order from ``seed``."""
    if not 0 <= seed < topo.num_joints:
        raise ValueError(f"seed {seed} is not a joint of a {topo.num_joints}-joint skeleton")
    seen = {seed}
    queue = deque([seed])
    while queue:
        u = queue.popleft()
        nbrs = topo.neighbors(u)
        if order == "descending":
            nbrs = nbrs[::-1]
        for v in nbrs:
            if v not in seen:
                seen.add(v)
                queue.append(v)
                yield u, v


def bfs_reconstruct(topo: SkeletonTopology, seed: int, seed_feat, x_b, order: str = "ascending") -> np.ndarray:
    """Spread ``seed_feat`` over the tree, adding the bone feature of every edge crossed."""
    bones = build_bone_graph(topo)
    x_b = np.asarray(x_b, dtype=np.float64)
    if x_b.shape[0] != bones.num_bones:
        raise ValueError(f"x_b has {x_b.shape[0]} rows for {bones.num_bones} bones")
    edges = list(_bfs_edges(topo, seed, order))
    out = np.empty((topo.num_joints, x_b.shape[1]))
    out[seed] = seed_feat
    for u, v in edges:
        out[v] = out[u] + x_b[bones.bone_of_edge[frozenset((u, v))]]
    return out


@lru_cache(maxsize=32)
def path_matrices(topo: SkeletonTopology) -> np.ndarray:
    """(N, N, M) 0/1 array: [s, j, b] = 1 iff bone b lies on the tree path s -> j.

    Built by the same BFS as :func:`bfs_reconstruct`, run on indicator rows.
    """
    bones = build_bone_graph(topo)
    n, m = topo.num_joints, bones.num_bones
    paths = np.zeros((n, n, m))
    for s in range(n):
        for u, v in _bfs_edges(topo, s):
            paths[s, v] = paths[s, u]
            paths[s, v, bones.bone_of_edge[frozenset((u, v))]] += 1.0
    paths.setflags(write=False)
    return paths


def fusion_matrices(scores, topo: SkeletonTopology, mu: int, mode: str = "dynamic"):
    """Constant mixing matrices so that X_DF = S @ x_jc + Q @ x_b.

    ``scores`` is (B, N). Returns S (B, N, N) and Q (B, N, M).
    """
    if mode not in FUSION_MODES:
        raise ValueError(f"unknown fusion mode {mode!r}")
    scores = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    b, n = scores.shape
    paths = path_matrices(topo)
    s_mat = np.broadcast_to(np.eye(n), (b, n, n)).copy()
    q_mat = np.zeros((b, n, paths.shape[2]))
    if mode == "off":
        return s_mat, q_mat
    for k in range(b):
        seeds = range(n) if mode == "static" else filter_top_mu(scores[k], mu)
        for s in sorted(seeds):
            s_mat[k, :, s] += 1.0
            q_mat[k] += paths[s]
    return s_mat, q_mat


def dynamic_fusion(x_jc, x_b, scores, topo: SkeletonTopology, mu: int, mode: str = "dynamic") -> ad.Tensor:
    """Sum of per-seed BFS reconstructions plus the x_jc residual.

    ``x_jc`` is (B, N, D) or (N, D); ``x_b`` may be None when no bone features exist.
    Selection is not differentiated; gradients reach x_jc and x_b through the fixed
    mixing matrices.
    """
    x_jc = ad.as_tensor(x_jc)
    single = x_jc.ndim == 2
    s_mat, q_mat = fusion_matrices(scores, topo, mu, mode)
    if single:
        s_mat, q_mat = s_mat[0], q_mat[0]
    out = ad.matmul(s_mat, x_jc)
    if x_b is not None and mode != "off":
        out = ad.add(out, ad.matmul(q_mat, x_b))
    return out
