import numpy as np
import pytest

from oracles import dense_normalized
from posegraf import autodiff as ad
from posegraf.gcn import bone_adjacencies, bone_gcn_forward, embed_inputs, joint_gcn_forward, normalize_pose2d
from posegraf.skeleton import BoneDirections, bone_directions, build_bone_graph, chain_topology, normalized_adjacency


def leaky(x):
    return np.where(x > 0, x, 0.01 * x)


def random_graph(rng, n):
    a = (rng.random((n, n)) < 0.5).astype(float)
    a = np.triu(a, 1)
    return a + a.T


class TestJointGcn:
    def test_single_node_identity(self):
        x = np.array([[0.5, 2.0, 1.0]])
        out = joint_gcn_forward(x, np.array([[1.0]]), np.eye(3))
        np.testing.assert_array_equal(out.data, x)

    def test_zero_input(self, rng):
        out = joint_gcn_forward(np.zeros((4, 3)), normalized_adjacency(random_graph(rng, 4)), rng.normal(size=(3, 3)))
        assert np.all(out.data == 0)

    def test_matches_dense_formula(self, rng):
        a, x, th = random_graph(rng, 6), rng.normal(size=(6, 4)), rng.normal(size=(4, 4))
        out = joint_gcn_forward(x, normalized_adjacency(a), th)
        np.testing.assert_allclose(out.data, leaky(dense_normalized(a) @ x @ th), rtol=0, atol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            joint_gcn_forward(np.ones((3, 2)), np.eye(4), np.eye(2))

    def test_permutation_equivariance(self, rng):
        for n in (3, 5, 5, 5):
            a, x, th = random_graph(rng, n), rng.normal(size=(n, 4)), rng.normal(size=(4, 4))
            perm = rng.permutation(n)
            base = joint_gcn_forward(x, normalized_adjacency(a), th).data
            pa = a[np.ix_(perm, perm)]
            out = joint_gcn_forward(x[perm], normalized_adjacency(pa), th).data
            assert np.abs(out - base[perm]).max() < 1e-14  # summation order differs under relabelling

    def test_pointwise_when_self_loops_only(self, rng):
        x = rng.normal(size=(5, 3))
        out = joint_gcn_forward(x, normalized_adjacency(np.zeros((5, 5))), np.eye(3))
        np.testing.assert_array_equal(out.data, leaky(x))


class TestBoneGcn:
    def test_single_bone_identity_sum(self):
        x = np.array([[1.0, 3.0]])
        one = np.array([[1.0]])
        out = bone_gcn_forward(x, one, one, np.eye(2), np.eye(2))
        np.testing.assert_array_equal(out.data, 2 * x)

    def test_all_parallel_bones(self, h36m, rng):
        bones = build_bone_graph(h36m)
        dirs = BoneDirections(np.tile([1.0, 0.0], (16, 1)), np.zeros(16, bool))
        nw, na = bone_adjacencies(dirs, bones)
        np.testing.assert_array_equal(nw, np.eye(16))
        out = bone_gcn_forward(rng.normal(size=(16, 8)), nw, na, rng.normal(size=(8, 8)), rng.normal(size=(8, 8)))
        assert np.isfinite(out.data).all()

    def test_modes_same_shape(self, h36m, rng):
        bones = build_bone_graph(h36m)
        nw, na = bone_adjacencies(bone_directions(rng.normal(size=(17, 2)), bones), bones)
        x, tw, ta = rng.normal(size=(16, 8)), rng.normal(size=(8, 8)), rng.normal(size=(8, 8))
        s = bone_gcn_forward(x, nw, na, tw, ta)
        c = bone_gcn_forward(x, nw, na, tw, ta, "concat_project", rng.normal(size=(16, 8)))
        assert s.shape == c.shape == (16, 8)
        with pytest.raises(ValueError):
            bone_gcn_forward(x, nw, na, tw, ta, "concat_project")
        with pytest.raises(ValueError):
            bone_gcn_forward(x, nw, na, tw, ta, "max")

    def test_matches_dense_formula(self, h36m, rng):
        bones = build_bone_graph(h36m)
        dirs = bone_directions(rng.normal(size=(17, 2)), bones)
        nw, na = bone_adjacencies(dirs, bones)
        x, tw, ta, pr = (rng.normal(size=s) for s in ((16, 4), (4, 4), (4, 4), (8, 4)))
        from posegraf.skeleton import angle_weights
        ow, oa = dense_normalized(angle_weights(dirs, bones)), dense_normalized(bones.binary_adjacency)
        xw, xa = leaky(ow @ x @ tw), leaky(oa @ x @ ta)
        np.testing.assert_allclose(bone_gcn_forward(x, nw, na, tw, ta).data, xw + xa, atol=1e-12, rtol=0)
        np.testing.assert_allclose(bone_gcn_forward(x, nw, na, tw, ta, "concat_project", pr).data,
                                   np.concatenate([xw, xa], -1) @ pr, atol=1e-12, rtol=0)

    def test_permutation_equivariance(self, rng):
        for _ in range(3):
            w = random_graph(rng, 5) * rng.uniform(0, np.pi, size=(5, 5))
            w = np.triu(w, 1) + np.triu(w, 1).T
            a = (w > 0).astype(float)
            x, tw, ta = rng.normal(size=(5, 3)), rng.normal(size=(3, 3)), rng.normal(size=(3, 3))
            perm = rng.permutation(5)
            base = bone_gcn_forward(x, normalized_adjacency(w), normalized_adjacency(a), tw, ta).data
            ix = np.ix_(perm, perm)
            out = bone_gcn_forward(x[perm], normalized_adjacency(w[ix]), normalized_adjacency(a[ix]), tw, ta).data
            assert np.abs(out - base[perm]).max() < 1e-14  # summation order differs under relabelling


class TestEmbedding:
    def test_zero(self):
        dirs = BoneDirections(np.zeros((2, 2)), np.ones(2, bool))
        xj, xb = embed_inputs(np.zeros((3, 2)), dirs, np.ones((2, 4)), np.zeros(4), np.ones((2, 4)), np.zeros(4))
        assert np.all(xj.data == 0) and np.all(xb.data == 0)

    def test_rowwise(self, rng):
        pose = rng.normal(size=(6, 2))
        w, b = rng.normal(size=(2, 4)), rng.normal(size=4)
        perm = rng.permutation(6)
        base, _ = embed_inputs(pose, np.zeros((1, 2)), w, b, w, b)
        out, _ = embed_inputs(pose[perm], np.zeros((1, 2)), w, b, w, b)
        np.testing.assert_array_equal(out.data, base.data[perm])

    def test_h36m_shapes(self, h36m, rng):
        pose = rng.normal(size=(17, 2))
        dirs = bone_directions(pose, build_bone_graph(h36m))
        xj, xb = embed_inputs(pose, dirs, *(rng.normal(size=s) for s in ((2, 32), (32,), (2, 32), (32,))))
        assert xj.shape == (17, 32) and xb.shape == (16, 32)


class TestNormalizePose:
    def test_root_centered_and_bounded(self, h36m, rng):
        pose = rng.uniform(0, 1000, size=(10, 17, 2))
        out = normalize_pose2d(pose, h36m)
        assert np.all(out[:, 0] == 0)
        assert np.abs(out).max() <= 1


def test_gcn_gradients(rng):
    from posegraf.gradcheck import check_gcn
    assert check_gcn(3) < 1e-6
