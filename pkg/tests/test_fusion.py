import numpy as np
import pytest

from oracles import path_sum
from posegraf import autodiff as ad
from posegraf.fusion import bfs_reconstruct, dynamic_fusion, filter_top_mu, fusion_matrices
from posegraf.skeleton import chain_topology


class TestTopMu:
    def test_examples(self):
        assert filter_top_mu([0.1, 0.9, 0.5], 2) == [1, 2]
        assert filter_top_mu([0.1, 0.9, 0.5], 0) == []
        assert filter_top_mu([0.3, 0.3, 0.3, 0.3], 3) == [0, 1, 2]

    def test_mu_too_large(self):
        with pytest.raises(ValueError):
            filter_top_mu([0.1, 0.2], 3)

    def test_matches_argsort(self, rng):
        for _ in range(50):
            s = rng.random(17)
            mu = int(rng.integers(0, 18))
            assert filter_top_mu(s, mu) == list(np.argsort(-s, kind="stable")[:mu])


class TestBfs:
    def test_single_edge(self):
        f, b = np.array([1.0, 2.0]), np.array([[10.0, 20.0]])
        np.testing.assert_array_equal(bfs_reconstruct(chain_topology(2), 0, f, b), [f, f + b[0]])

    def test_chain_from_middle(self):
        f, b = np.array([1.0]), np.array([[10.0], [100.0]])
        np.testing.assert_array_equal(bfs_reconstruct(chain_topology(3), 1, f, b), [[11.0], [1.0], [101.0]])

    def test_invalid_seed(self):
        with pytest.raises(ValueError):
            bfs_reconstruct(chain_topology(3), 5, np.zeros(1), np.zeros((2, 1)))

    def test_path_sum_oracle_every_pair(self, h36m, rng):
        x_b = rng.normal(size=(16, 4))
        for seed in range(17):
            f = rng.normal(size=4)
            out = bfs_reconstruct(h36m, seed, f, x_b)
            assert np.abs(out - path_sum(h36m, seed, f, x_b)).max() < 1e-12
            # any BFS order gives the same path sums
            assert np.abs(out - bfs_reconstruct(h36m, seed, f, x_b, order="descending")).max() < 1e-12


class TestDynamicFusion:
    def test_mu_zero(self, h36m, rng):
        x_jc, x_b = rng.normal(size=(17, 4)), rng.normal(size=(16, 4))
        out = dynamic_fusion(x_jc, x_b, rng.random(17), h36m, 0)
        np.testing.assert_array_equal(out.data, x_jc)

    def test_mu_one_zero_bones(self, h36m, rng):
        x_jc = rng.normal(size=(17, 4))
        scores = rng.random(17)
        seed = int(np.argmax(scores))
        out = dynamic_fusion(x_jc, np.zeros((16, 4)), scores, h36m, 1)
        np.testing.assert_allclose(out.data, x_jc + x_jc[seed], rtol=0, atol=1e-15)

    def test_chain_mu_two_brute_force(self, rng):
        topo = chain_topology(3)
        for _ in range(10):
            x_jc, x_b, s = rng.normal(size=(3, 5)), rng.normal(size=(2, 5)), rng.random(3)
            seeds = np.argsort(-s)[:2]
            expected = x_jc + sum(path_sum(topo, k, x_jc[k], x_b) for k in seeds)
            out = dynamic_fusion(x_jc, x_b, s, topo, 2)
            assert np.abs(out.data - expected).max() < 1e-12

    def test_additive_in_seeds(self, h36m, rng):
        x_jc, x_b, s = rng.normal(size=(17, 3)), rng.normal(size=(16, 3)), rng.random(17)
        out = dynamic_fusion(x_jc, x_b, s, h36m, 4).data
        parts = sum(bfs_reconstruct(h36m, k, x_jc[k], x_b) for k in filter_top_mu(s, 4))
        assert np.abs(out - x_jc - parts).max() < 1e-12

    def test_static_uses_all_joints(self, h36m, rng):
        x_jc, x_b = rng.normal(size=(17, 3)), rng.normal(size=(16, 3))
        out = dynamic_fusion(x_jc, x_b, rng.random(17), h36m, 4, "static").data
        expected = x_jc + sum(path_sum(h36m, k, x_jc[k], x_b) for k in range(17))
        assert np.abs(out - expected).max() < 1e-11

    def test_off_and_bad_mode(self, h36m, rng):
        x_jc = rng.normal(size=(2, 17, 3))
        out = dynamic_fusion(x_jc, rng.normal(size=(2, 16, 3)), rng.random((2, 17)), h36m, 4, "off")
        np.testing.assert_array_equal(out.data, x_jc)
        with pytest.raises(ValueError):
            fusion_matrices(rng.random(17), h36m, 4, "soft")

    def test_batched_rows_independent(self, h36m, rng):
        x_jc, x_b, s = rng.normal(size=(3, 17, 4)), rng.normal(size=(3, 16, 4)), rng.random((3, 17))
        out = dynamic_fusion(x_jc, x_b, s, h36m, 4).data
        for k in range(3):
            single = dynamic_fusion(x_jc[k], x_b[k], s[k], h36m, 4).data
            assert np.abs(out[k] - single).max() < 1e-12

    def test_deterministic(self, h36m, rng):
        x_jc, x_b, s = rng.normal(size=(17, 4)), rng.normal(size=(16, 4)), rng.random(17)
        a = dynamic_fusion(x_jc, x_b, s, h36m, 4).data
        b = dynamic_fusion(x_jc, x_b, s, h36m, 4).data
        assert np.array_equal(a, b)


def test_fusion_gradients():
    from posegraf.gradcheck import check_fusion
    assert check_fusion(2) < 1e-6
