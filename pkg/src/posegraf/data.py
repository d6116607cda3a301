"""Line-delimited pose datasets and a forward-kinematics synthetic generator."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .skeleton import SkeletonTopology, h36m_topology


class DatasetError(ValueError):
    pass


@dataclass
class PoseSample:
    id: str
    joints_2d: np.ndarray  # (N, 2) pixels
    joints_3d: np.ndarray | None = None  # (N, 3) mm, root-relative
    action: str | None = None

    def to_record(self) -> dict:
        rec = {"id": self.id, "action": self.action, "joints_2d": np.asarray(self.joints_2d).tolist()}
        if self.joints_3d is not None:
            rec["joints_3d"] = np.asarray(self.joints_3d).tolist()
        return rec


def _matrix(value, rows: int, cols: int, what: str, lineno: int) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=np.float64)
    except (TypeError, ValueError) as e:
        raise DatasetError(f"line {lineno}: {what} is not numeric") from e
    if arr.shape != (rows, cols):
        raise DatasetError(f"line {lineno}: {what} has shape {arr.shape}, expected ({rows}, {cols})")
    if not np.all(np.isfinite(arr)):
        raise DatasetError(f"line {lineno}: {what} contains non-finite values")
    return arr


def read_dataset(path, topo: SkeletonTopology | None = None, require_3d: bool = True) -> list[PoseSample]:
    """Parse one JSON object per line; blank lines are skipped."""
    n = (topo or h36m_topology()).num_joints
    samples = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise DatasetError(f"line {lineno}: malformed record ({e.msg})") from e
            if not isinstance(rec, dict) or "joints_2d" not in rec:
                raise DatasetError(f"line {lineno}: record needs a joints_2d field")
            j2 = _matrix(rec["joints_2d"], n, 2, "joints_2d", lineno)
            j3 = None
            if rec.get("joints_3d") is not None:
                j3 = _matrix(rec["joints_3d"], n, 3, "joints_3d", lineno)
            elif require_3d:
                raise DatasetError(f"line {lineno}: record needs a joints_3d field")
            samples.append(PoseSample(str(rec.get("id", lineno)), j2, j3, rec.get("action")))
    return samples


def write_dataset(path, samples) -> None:
    # json writes floats with repr(), the shortest string that round-trips exactly
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for s in samples:
            f.write(json.dumps(s.to_record(), separators=(",", ":")) + "\n")


def stack(samples) -> tuple[np.ndarray, np.ndarray | None]:
    x = np.stack([s.joints_2d for s in samples])
    if any(s.joints_3d is None for s in samples):
        return x, None
    return x, np.stack([s.joints_3d for s in samples])


# ---------------------------------------------------------------- synthetic poses

# Rest-pose offsets (child minus parent, mm) for the 17-joint layout, camera frame:
# x to the image right, y down, z away from the camera. Subject faces the camera.
H36M_REST_OFFSETS = np.array([
    [0, 0, 0],
    [-130, 0, 0], [0, 450, 0], [0, 450, 0],       # right leg
    [130, 0, 0], [0, 450, 0], [0, 450, 0],        # left leg
    [0, -230, 0], [0, -250, 0], [0, -110, -20], [0, -120, 20],  # spine, thorax, neck, head
    [150, 0, 0], [0, 280, 0], [0, 250, 0],        # left arm
    [-150, 0, 0], [0, 280, 0], [0, 250, 0],       # right arm
], dtype=np.float64)


def _default_bone_lengths() -> tuple:
    return tuple(float(v) for v in np.linalg.norm(H36M_REST_OFFSETS[1:], axis=1))


@dataclass
class SyntheticGenConfig:
    seed: int = 7
    count: int = 100
    bone_lengths_mm: tuple = field(default_factory=_default_bone_lengths)
    max_joint_angle_rad: float = 0.6
    focal_px: float = 1000.0
    camera_distance_mm: float = 4500.0
    max_retries: int = 100

    def validate(self, topo: SkeletonTopology) -> "SyntheticGenConfig":
        if self.count < 1:
            raise ValueError("count must be >= 1")
        if len(self.bone_lengths_mm) != topo.num_bones:
            raise ValueError(f"{len(self.bone_lengths_mm)} bone lengths for {topo.num_bones} bones")
        if min(self.bone_lengths_mm) <= 0:
            raise ValueError("bone lengths must be positive")
        if self.max_joint_angle_rad < 0 or self.focal_px <= 0:
            raise ValueError("max_joint_angle_rad must be >= 0 and focal_px > 0")
        if self.camera_distance_mm <= sum(self.bone_lengths_mm):
            raise ValueError("camera distance must exceed the total skeleton reach")
        return self


def rotation_matrix(axis, angle: float) -> np.ndarray:
    """Rodrigues' formula for a unit ``axis``."""
    k = np.asarray(axis, dtype=np.float64)
    kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + math.sin(angle) * kx + (1 - math.cos(angle)) * kx @ kx


def _random_rotation(rng: np.random.Generator, max_angle: float) -> np.ndarray:
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return rotation_matrix(axis, rng.uniform(0.0, max_angle))


def rest_directions(topo: SkeletonTopology) -> np.ndarray:
    """Unit rest direction per joint (row of the root unused)."""
    if topo.num_joints == 17 and topo.parents == h36m_topology().parents:
        off = H36M_REST_OFFSETS
    else:
        off = np.zeros((topo.num_joints, 3))
        off[:, 1] = 1.0  # generic skeleton: every bone points down at rest
    norms = np.linalg.norm(off, axis=1, keepdims=True)
    return np.divide(off, norms, out=np.zeros_like(off), where=norms > 0)


def forward_kinematics(topo: SkeletonTopology, rotations: np.ndarray, lengths, rest_dirs) -> np.ndarray:
    """Root-relative joints from per-joint local rotations (root entry is global)."""
    n = topo.num_joints
    glob = [None] * n
    pos = np.zeros((n, 3))
    glob[topo.root] = rotations[topo.root]
    bone = 0
    lengths = list(lengths)
    bone_of_joint = {}
    for c, _ in topo.edges():
        bone_of_joint[c] = bone
        bone += 1
    for j in _topological_order(topo):
        p = topo.parents[j]
        if p is None:
            continue
        glob[j] = glob[p] @ rotations[j]
        pos[j] = pos[p] + glob[j] @ (lengths[bone_of_joint[j]] * rest_dirs[j])
    return pos


def _topological_order(topo: SkeletonTopology) -> list[int]:
    order, queue = [], [topo.root]
    while queue:
        j = queue.pop(0)
        order.append(j)
        queue.extend(topo.children(j))
    return order


def project(points3d, focal: float, camera_distance: float) -> np.ndarray:
    """Ideal pinhole projection of root-relative points placed ``camera_distance`` ahead."""
    p = np.asarray(points3d, dtype=np.float64)
    z = p[..., 2] + camera_distance
    return np.stack([focal * p[..., 0] / z, focal * p[..., 1] / z], axis=-1)


def generate_synthetic(cfg: SyntheticGenConfig, topo: SkeletonTopology | None = None) -> list[PoseSample]:
    topo = topo or h36m_topology()
    cfg.validate(topo)
    rng = np.random.default_rng(cfg.seed)
    rest = rest_directions(topo)
    samples = []
    for i in range(cfg.count):
        for _ in range(cfg.max_retries):
            rots = np.stack([_random_rotation(rng, cfg.max_joint_angle_rad) for _ in range(topo.num_joints)])
            joints = forward_kinematics(topo, rots, cfg.bone_lengths_mm, rest)
            if np.all(joints[:, 2] + cfg.camera_distance_mm > 0):
                break
        else:
            raise RuntimeError(f"sample {i}: joints behind the camera after {cfg.max_retries} draws")
        samples.append(PoseSample(f"synth-{cfg.seed}-{i:06d}", project(joints, cfg.focal_px, cfg.camera_distance_mm), joints))
    return samples
