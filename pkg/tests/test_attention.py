import numpy as np
import pytest

from posegraf import autodiff as ad
from posegraf.attention import (
    EmaState,
    cross_attention_forward,
    ema_update,
    joint_bone_block,
    merge_heads,
    split_heads,
)


def layer(rng, d, scale=0.3, zero=False):
    f = (lambda *s: np.zeros(s)) if zero else (lambda *s: rng.normal(size=s) * scale)
    return {"wq": f(d, d), "wk": f(d, d), "wv": f(d, d), "wo": f(d, d),
            "w1": f(d, 2 * d), "b1": f(2 * d), "w2": f(2 * d, d), "b2": f(d)}


class TestUniformAttention:
    def test_zero_projections(self, rng):
        n, m, d, h = 5, 4, 8, 2
        maps = []
        ema = EmaState()
        _, _, scores = cross_attention_forward(rng.normal(size=(n + m, d)), [layer(rng, d, zero=True)] * 2,
                                               n, h, ema, maps)
        for a in maps:
            assert np.abs(a - 1 / (n + m)).max() < 1e-15
        assert np.abs(ema.value - 1 / (n + m)).max() < 1e-15
        assert np.abs(scores - 1 / (n + m)).max() < 1e-15


class TestEma:
    def test_initialize(self, rng):
        b = rng.random((2, 3, 4))
        assert np.array_equal(ema_update(EmaState(), b).value, b)

    def test_constant_fixed_point(self, rng):
        b = rng.random((2, 3, 4))
        s = EmaState()
        for _ in range(6):
            ema_update(s, b)
        assert np.abs(s.value - b).max() < 1e-15

    def test_scalar(self):
        s = ema_update(ema_update(EmaState(), np.array([[1.0]])), np.array([[0.0]]))
        assert s.value[0, 0] == pytest.approx(0.99, abs=1e-15)

    def test_geometric_decay(self):
        s = ema_update(EmaState(), np.ones((1, 1)))
        for k in range(2, 11):
            ema_update(s, np.zeros((1, 1)))
            assert s.value[0, 0] == pytest.approx(0.99 ** (k - 1), rel=1e-13)

    def test_shape_conflict(self):
        s = ema_update(EmaState(), np.ones((2, 3)))
        with pytest.raises(ValueError):
            ema_update(s, np.ones((3, 2)))


class TestCrossAttention:
    def setup_method(self):
        rng = np.random.default_rng(5)
        self.n, self.m, self.d, self.h = 6, 5, 8, 2
        self.layers = [layer(rng, self.d, 0.6) for _ in range(3)]
        self.tokens = rng.normal(size=(self.n + self.m, self.d))

    def run(self, tokens, **kw):
        return cross_attention_forward(tokens, self.layers, self.n, self.h, **kw)

    def test_rows_sum_to_one_and_ema_in_unit_interval(self):
        maps, ema = [], EmaState()
        self.run(self.tokens, ema=ema, attn_maps=maps)
        for a in maps:
            assert np.abs(a.sum(-1) - 1).max() < 1e-12
        assert ema.value.shape == (1, self.h, self.m, self.n)
        assert ema.value.min() >= 0 and ema.value.max() <= 1

    def test_block_orientation(self):
        maps = []
        self.run(self.tokens, attn_maps=maps)
        blk = joint_bone_block(maps[0], self.n)
        assert blk[0, 1, 2, 3] == maps[0][0, 1, 3, self.n + 2]

    def test_scores_formula(self):
        maps = []
        _, _, scores = self.run(self.tokens, attn_maps=maps)
        blocks = [joint_bone_block(a, self.n)[0] for a in maps]
        ema = blocks[0]
        for b in blocks[1:]:
            ema = 0.99 * ema + 0.01 * b
        expected = ema.sum(axis=(0, 1)) / (self.h * self.m)
        assert np.abs(scores - expected).max() < 1e-15
        assert np.all(scores >= 0)

    def test_bone_permutation_invariance(self, rng):
        _, xbc, s0 = self.run(self.tokens)
        perm = self.n + rng.permutation(self.m)
        tokens = np.concatenate([self.tokens[: self.n], self.tokens[perm]])
        _, xbc_p, s1 = self.run(tokens)
        assert np.abs(s0 - s1).max() < 1e-12
        assert np.abs(xbc.data[perm - self.n] - xbc_p.data).max() < 1e-12

    def test_split_reconstructs_output(self):
        from posegraf.attention import cross_attention_layer
        x = ad.Tensor(self.tokens[None])
        for p in self.layers:
            x, _ = cross_attention_layer(x, p, self.h)
        xjc, xbc, _ = self.run(self.tokens)
        assert np.array_equal(np.concatenate([xjc.data, xbc.data]), x.data[0])

    def test_fresh_state_per_call(self):
        _, _, a = self.run(self.tokens)
        _, _, b = self.run(self.tokens)
        assert np.array_equal(a, b)

    def test_batched_matches_single(self, rng):
        other = rng.normal(size=self.tokens.shape)
        xjc, _, s = cross_attention_forward(np.stack([self.tokens, other]), self.layers, self.n, self.h)
        xjc0, _, s0 = self.run(self.tokens)
        assert np.abs(xjc.data[0] - xjc0.data).max() < 1e-12
        assert np.abs(s[0] - s0).max() < 1e-15

    def test_shape_errors(self):
        with pytest.raises(ValueError):
            cross_attention_forward(self.tokens, self.layers, self.n, 3)
        with pytest.raises(ValueError):
            cross_attention_forward(self.tokens[:3], self.layers, self.n, self.h)

    def test_no_bones_gives_zero_scores(self):
        _, xbc, s = cross_attention_forward(self.tokens[: self.n], self.layers, self.n, self.h)
        assert xbc.shape == (0, self.d)
        assert np.all(s == 0)


def test_split_merge_heads_round_trip(rng):
    x = ad.Tensor(rng.normal(size=(2, 7, 8)))
    assert np.array_equal(merge_heads(split_heads(x, 4)).data, x.data)


def test_attention_gradients():
    from posegraf.gradcheck import check_attention
    assert check_attention(1) < 1e-6
