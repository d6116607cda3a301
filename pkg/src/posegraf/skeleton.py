"""Joint tree, bone graph, per-pose bone geometry and mirror symmetry."""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DEGENERATE_EPS = 1e-8


class TopologyError(ValueError):
    pass


# Human3.6M 17-joint layout (pelvis-rooted), as used by most lifting work.
H36M_JOINT_NAMES = [
    "Hip", "RHip", "RKnee", "RFoot", "LHip", "LKnee", "LFoot", "Spine", "Thorax",
    "Neck", "Head", "LShoulder", "LElbow", "LWrist", "RShoulder", "RElbow", "RWrist",
]
H36M_PARENTS = [None, 0, 1, 2, 0, 4, 5, 0, 7, 8, 9, 8, 11, 12, 8, 14, 15]
H36M_MIRROR_PAIRS = [(4, 1), (5, 2), (6, 3), (11, 14), (12, 15), (13, 16)]


@dataclass(frozen=True)
class SkeletonTopology:
    num_joints: int
    parents: tuple  # parent index per joint, None for the root
    mirror_pairs: tuple = ()
    joint_names: tuple = ()

    @property
    def root(self) -> int:
        return self.parents.index(None)

    @property
    def num_bones(self) -> int:
        return self.num_joints - 1

    def children(self, j: int) -> list[int]:
        return [c for c, p in enumerate(self.parents) if p == j]

    def neighbors(self, j: int) -> list[int]:
        nb = self.children(j)
        if self.parents[j] is not None:
            nb.append(self.parents[j])
        return sorted(nb)

    def edges(self) -> list[tuple[int, int]]:
        """(child, parent) for every non-root joint, ascending child index."""
        return [(c, p) for c, p in enumerate(self.parents) if p is not None]

    def to_dict(self) -> dict:
        return {
            "num_joints": self.num_joints,
            "parents": list(self.parents),
            "mirror_pairs": [list(p) for p in self.mirror_pairs],
            "names": list(self.joint_names),
        }


def validate_topology(raw: dict) -> SkeletonTopology:
    """Check a parsed topology description and build a :class:`SkeletonTopology`.

    ``raw`` has keys ``parents`` (root marked by ``None``, ``"root"`` or -1),
    optional ``num_joints``, ``mirror_pairs`` and ``names``.
    """
    if "parents" not in raw:
        raise TopologyError("topology needs a 'parents' list")
    parents = []
    for p in raw["parents"]:
        if p is None or p == "root" or p == -1:
            parents.append(None)
        elif isinstance(p, int) and not isinstance(p, bool):
            parents.append(p)
        else:
            raise TopologyError(f"bad parent entry {p!r}")
    n = len(parents)
    if n == 0:
        raise TopologyError("topology has no joints")
    if raw.get("num_joints", n) != n:
        raise TopologyError(f"num_joints={raw['num_joints']} but {n} parents given")

    roots = [j for j, p in enumerate(parents) if p is None]
    for j, p in enumerate(parents):
        if p is not None and not 0 <= p < n:
            raise TopologyError(f"joint {j} has out-of-range parent {p}")
        if p == j:
            raise TopologyError(f"cycle: joint {j} is its own parent")
    # walking up from every joint must reach a root without revisiting
    for j in range(n):
        seen = {j}
        k = parents[j]
        while k is not None:
            if k in seen:
                raise TopologyError(f"cycle through joint {k}")
            seen.add(k)
            k = parents[k]
    if len(roots) != 1:
        raise TopologyError(f"expected exactly one root, found {len(roots)}")

    pairs = []
    used: set[int] = set()
    for pair in raw.get("mirror_pairs", []) or []:
        l, r = (int(v) for v in pair)
        if not (0 <= l < n and 0 <= r < n):
            raise TopologyError(f"dangling mirror index in pair {(l, r)}")
        if l == r or l in used or r in used:
            raise TopologyError(f"mirror pair {(l, r)} is not disjoint")
        used.update((l, r))
        pairs.append((l, r))

    names = tuple(raw.get("names") or raw.get("joint_names") or (f"j{j}" for j in range(n)))
    if len(names) != n:
        raise TopologyError(f"{len(names)} names for {n} joints")
    return SkeletonTopology(n, tuple(parents), tuple(pairs), names)


def h36m_topology() -> SkeletonTopology:
    return validate_topology(
        {"parents": H36M_PARENTS, "mirror_pairs": H36M_MIRROR_PAIRS, "names": H36M_JOINT_NAMES}
    )


def chain_topology(n: int) -> SkeletonTopology:
    return validate_topology({"parents": [None] + list(range(n - 1))})


def load_topology(path: str | Path) -> SkeletonTopology:
    with open(path, encoding="utf-8") as f:
        return validate_topology(json.load(f))


def save_topology(topo: SkeletonTopology, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(topo.to_dict(), f, indent=1)


# ---------------------------------------------------------------- bone graph


@dataclass(frozen=True)
class BoneGraph:
    num_bones: int
    endpoints: tuple  # (source=child, target=parent) per bone
    binary_adjacency: np.ndarray = field(repr=False)
    shared_joint: dict = field(repr=False)
    bone_of_edge: dict = field(repr=False)  # frozenset({u, v}) -> bone index


def build_bone_graph(topo: SkeletonTopology) -> BoneGraph:
    endpoints = tuple(topo.edges())
    m = len(endpoints)
    adj = np.zeros((m, m))
    shared = {}
    for p in range(m):
        for q in range(p + 1, m):
            common = set(endpoints[p]) & set(endpoints[q])
            if len(common) == 1:
                adj[p, q] = adj[q, p] = 1.0
                j = common.pop()
                shared[(p, q)] = shared[(q, p)] = j
    adj.setflags(write=False)
    lookup = {frozenset(e): b for b, e in enumerate(endpoints)}
    return BoneGraph(m, endpoints, adj, shared, lookup)


@dataclass(frozen=True)
class BoneDirections:
    directions: np.ndarray  # (..., M, 2)
    degenerate_mask: np.ndarray  # (..., M)


def bone_directions(pose2d, bones: BoneGraph) -> BoneDirections:
    """Unit child-minus-parent vectors; zero rows for bones shorter than 1e-8.

    Accepts a single pose (N, 2) or a batch (B, N, 2).
    """
    pose2d = np.asarray(pose2d, dtype=np.float64)
    src = [s for s, _ in bones.endpoints]
    dst = [t for _, t in bones.endpoints]
    vec = pose2d[..., src, :] - pose2d[..., dst, :]
    norm = np.linalg.norm(vec, axis=-1, keepdims=True)
    degenerate = norm[..., 0] < DEGENERATE_EPS
    safe = np.where(degenerate[..., None], 1.0, norm)
    dirs = np.where(degenerate[..., None], 0.0, vec / safe)
    return BoneDirections(dirs, degenerate)


def angle_weights(dirs: BoneDirections, bones: BoneGraph) -> np.ndarray:
    """Angle in radians between adjacent bone directions, 0 elsewhere."""
    d = dirs.directions
    cos = np.clip(d @ np.swapaxes(d, -1, -2), -1.0, 1.0)
    w = np.arccos(cos) * bones.binary_adjacency
    ok = ~dirs.degenerate_mask
    return w * (ok[..., :, None] & ok[..., None, :])


def hop_distance_matrix(topo: SkeletonTopology) -> np.ndarray:
    n = topo.num_joints
    nbrs = [topo.neighbors(j) for j in range(n)]
    hops = np.zeros((n, n), dtype=np.int64)
    for s in range(n):
        dist = [-1] * n
        dist[s] = 0
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for v in nbrs[u]:
                if dist[v] < 0:
                    dist[v] = dist[u] + 1
                    queue.append(v)
        hops[s] = dist
    return hops


def joint_adjacency(topo: SkeletonTopology) -> np.ndarray:
    a = np.zeros((topo.num_joints, topo.num_joints))
    for c, p in topo.edges():
        a[c, p] = a[p, c] = 1.0
    return a


def normalized_adjacency(adj, add_self_loops: bool = True) -> np.ndarray:
    """D^-1/2 (A [+ I]) D^-1/2 with D the row sums; zero-degree rows stay zero.

    Works on a single matrix or a stack of matrices.
    """
    a = np.asarray(adj, dtype=np.float64)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ValueError(f"adjacency must be square, got shape {a.shape}")
    if add_self_loops:
        a = a + np.eye(a.shape[-1])
    deg = a.sum(axis=-1)
    inv = np.zeros_like(deg)
    np.divide(1.0, np.sqrt(deg, where=deg > 0, out=np.zeros_like(deg)), out=inv, where=deg > 0)
    return inv[..., :, None] * a * inv[..., None, :]


def mirror_permutation(topo: SkeletonTopology) -> np.ndarray:
    perm = np.arange(topo.num_joints)
    for l, r in topo.mirror_pairs:
        perm[l], perm[r] = r, l
    return perm


def horizontal_flip(pose, topo: SkeletonTopology) -> np.ndarray:
    """Negate x and swap left/right joints. Works on (..., N, 2|3)."""
    pose = np.asarray(pose, dtype=np.float64)
    out = pose[..., mirror_permutation(topo), :].copy()
    out[..., 0] = -out[..., 0]
    return out
