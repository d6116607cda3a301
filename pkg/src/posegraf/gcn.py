"""Joint and bone-direction graph convolutions and input embeddings."""
from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from .skeleton import (
    BoneDirections,
    BoneGraph,
    SkeletonTopology,
    angle_weights,
    normalized_adjacency,
)

LEAKY_SLOPE = 0.01


def normalize_pose2d(pose2d, topo: SkeletonTopology, image_size=(1000.0, 1000.0)) -> np.ndarray:
    """Center pixel keypoints on the root joint and divide by the image diagonal.

    Any pose that fits in the image lands in [-1, 1].
    """
    pose2d = np.asarray(pose2d, dtype=np.float64)
    diag = math.hypot(*image_size)
    root = topo.root
    return (pose2d - pose2d[..., root : root + 1, :]) / diag


def bone_adjacencies(dirs: BoneDirections, bones: BoneGraph) -> tuple[np.ndarray, np.ndarray]:
    """Normalized angle-weighted and binary bone matrices, both with self loops."""
    w = angle_weights(dirs, bones)
    return normalized_adjacency(w, True), normalized_adjacency(bones.binary_adjacency, True)


def joint_gcn_forward(x, norm_adj, theta_j) -> ad.Tensor:
    """LeakyReLU(norm_adj @ x @ theta_j); x is (N, D) or (B, N, D)."""
    x = ad.as_tensor(x)
    if x.shape[-2] != np.shape(norm_adj)[-1]:
        raise ValueError(f"{x.shape[-2]} nodes but adjacency is {np.shape(norm_adj)}")
    return ad.leaky_relu(ad.matmul(ad.matmul(norm_adj, x), theta_j), LEAKY_SLOPE)


def bone_gcn_forward(x, norm_w, norm_a, theta_w, theta_a, combine_mode="sum", projection=None) -> ad.Tensor:
    """Angle-weighted branch plus connectivity branch, combined by sum or concat+project."""
    x = ad.as_tensor(x)
    xw = ad.leaky_relu(ad.matmul(ad.matmul(norm_w, x), theta_w), LEAKY_SLOPE)
    xa = ad.leaky_relu(ad.matmul(ad.matmul(norm_a, x), theta_a), LEAKY_SLOPE)
    if combine_mode == "sum":
        return ad.add(xw, xa)
    if combine_mode == "concat_project":
        if projection is None:
            raise ValueError("concat_project needs a (2D, D) projection")
        return ad.matmul(ad.concat([xw, xa], axis=-1), projection)
    raise ValueError(f"unknown combine_mode {combine_mode!r}")


def embed_inputs(pose2d, dirs, joint_w, joint_b, bone_w, bone_b) -> tuple[ad.Tensor, ad.Tensor]:
    """Rowwise affine maps: joints (.., N, 2) -> (.., N, D), bone directions -> (.., M, D)."""
    d = dirs.directions if isinstance(dirs, BoneDirections) else dirs
    xj = ad.add(ad.matmul(ad.Tensor(pose2d), joint_w), joint_b)
    xb = ad.add(ad.matmul(ad.Tensor(d), bone_w), bone_b)
    return xj, xb
