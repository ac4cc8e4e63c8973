"""Attention mechanisms: hand cases, symmetry/locality properties, gradients."""

import math

import numpy as np
import pytest

from coge.attention import AttentionConfig, MultiHeadAttention, TransformerBlock, window_attention
from coge.errors import ConfigError, ShapeError
from coge.gradcheck import gradcheck, randomize_params
from coge.tensor import Param, Tensor


def _mha(cfg, seed=0, randomize=True):
    rng = np.random.default_rng(seed)
    attn = MultiHeadAttention(cfg, rng)
    if randomize:
        randomize_params(attn, rng)
    return attn


def _reference_single_head(x, ctx, attn):
    """Independent numpy evaluation of single-head attention."""
    q = x @ attn.wq.weight.data.T + attn.wq.bias.data
    k = ctx @ attn.wk.weight.data.T
    v = ctx @ attn.wv.weight.data.T + attn.wv.bias.data
    scores = q @ k.T / math.sqrt(x.shape[1])
    e = np.exp(scores - scores.max(axis=1, keepdims=True))
    w = e / e.sum(axis=1, keepdims=True)
    return (w @ v) @ attn.out.weight.data.T + attn.out.bias.data


class TestSelfAttention:
    def test_single_token(self):
        cfg = AttentionConfig(dim=4, heads=2)
        attn = _mha(cfg, seed=1)
        x = np.random.default_rng(2).normal(size=(1, 4))
        out = attn(Tensor(x))
        # the only attention weight is 1, so output = out_proj(V)
        v = x @ attn.wv.weight.data.T + attn.wv.bias.data
        expect = v @ attn.out.weight.data.T + attn.out.bias.data
        assert np.allclose(out.data, expect, atol=1e-12)

    def test_identical_tokens_give_identical_outputs(self):
        cfg = AttentionConfig(dim=6, heads=3)
        attn = _mha(cfg, seed=3)
        row = np.random.default_rng(4).normal(size=6)
        out = attn(Tensor(np.stack([row, row]))).data
        assert np.allclose(out[0], out[1], atol=1e-12)

    def test_two_token_hand_case(self):
        cfg = AttentionConfig(dim=2, heads=1)
        attn = _mha(cfg, seed=5)
        x = np.array([[0.3, -1.2], [0.8, 0.4]])
        out = attn(Tensor(x)).data
        assert np.allclose(out, _reference_single_head(x, x, attn), atol=1e-12)

    def test_permutation_equivariance(self):
        cfg = AttentionConfig(dim=8, heads=4)
        attn = _mha(cfg, seed=6)
        x = np.random.default_rng(7).normal(size=(5, 8))
        perm = np.array([3, 0, 4, 1, 2])
        out = attn(Tensor(x)).data
        out_perm = attn(Tensor(x[perm])).data
        assert np.allclose(out_perm, out[perm], atol=1e-12)

    def test_empty_input_errors(self):
        attn = _mha(AttentionConfig(dim=4, heads=2))
        with pytest.raises(ShapeError):
            attn(Tensor(np.zeros((0, 4))))


class TestCrossAttention:
    def test_single_context_token(self):
        cfg = AttentionConfig(dim=4, heads=2)
        attn = _mha(cfg, seed=8)
        rng = np.random.default_rng(9)
        q = rng.normal(size=(3, 4))
        kv = rng.normal(size=(1, 4))
        out = attn(Tensor(q), Tensor(kv)).data
        v = kv @ attn.wv.weight.data.T + attn.wv.bias.data
        expect = v @ attn.out.weight.data.T + attn.out.bias.data
        assert np.allclose(out, np.broadcast_to(expect, out.shape), atol=1e-12)

    def test_self_case_matches_mhsa(self):
        cfg = AttentionConfig(dim=6, heads=2)
        attn = _mha(cfg, seed=10)
        x = np.random.default_rng(11).normal(size=(4, 6))
        assert np.allclose(attn(Tensor(x)).data, attn(Tensor(x), Tensor(x)).data, atol=1e-14)

    def test_hand_case_2x2(self):
        cfg = AttentionConfig(dim=2, heads=1)
        attn = _mha(cfg, seed=12)
        rng = np.random.default_rng(13)
        q, kv = rng.normal(size=(2, 2)), rng.normal(size=(2, 2))
        out = attn(Tensor(q), Tensor(kv)).data
        assert np.allclose(out, _reference_single_head(q, kv, attn), atol=1e-12)

    def test_empty_context_errors(self):
        attn = _mha(AttentionConfig(dim=4, heads=2))
        with pytest.raises(ShapeError):
            attn(Tensor(np.zeros((2, 4))), Tensor(np.zeros((0, 4))))


class TestWindowAttention:
    def test_full_window_equals_plain_attention(self):
        cfg = AttentionConfig(dim=3, heads=1, window=4)
        attn = _mha(cfg, seed=14)
        fmap = np.random.default_rng(15).normal(size=(3, 4, 4))
        out = window_attention(Tensor(fmap), attn).data
        tokens = fmap.reshape(3, 16).T
        expect = attn(Tensor(tokens)).data.T.reshape(3, 4, 4)
        assert np.allclose(out, expect, atol=1e-12)

    def test_window_independence(self):
        cfg = AttentionConfig(dim=4, heads=2, window=4)
        attn = _mha(cfg, seed=16)
        rng = np.random.default_rng(17)
        fmap = rng.normal(size=(4, 8, 8))
        base = window_attention(Tensor(fmap), attn).data
        # zero one tile; only that tile's output may change
        mod = fmap.copy()
        mod[:, 0:4, 0:4] = 0.0
        out = window_attention(Tensor(mod), attn).data
        assert not np.allclose(out[:, 0:4, 0:4], base[:, 0:4, 0:4])
        assert np.allclose(out[:, 0:4, 4:8], base[:, 0:4, 4:8], atol=1e-14)
        assert np.allclose(out[:, 4:8, :], base[:, 4:8, :], atol=1e-14)

    def test_constant_map(self):
        cfg = AttentionConfig(dim=3, heads=1, window=2)
        attn = _mha(cfg, seed=18)
        v = np.array([0.2, -0.7, 1.1])
        fmap = np.broadcast_to(v[:, None, None], (3, 6, 6)).copy()
        out = window_attention(Tensor(fmap), attn).data
        vv = v @ attn.wv.weight.data.T + attn.wv.bias.data
        expect = vv @ attn.out.weight.data.T + attn.out.bias.data
        assert np.allclose(out, expect[:, None, None], atol=1e-12)

    def test_odd_extents_padded_and_cropped(self):
        cfg = AttentionConfig(dim=2, heads=1, window=4)
        attn = _mha(cfg, seed=19)
        fmap = np.random.default_rng(20).normal(size=(2, 5, 7))
        out = window_attention(Tensor(fmap), attn)
        assert out.shape == (2, 5, 7)

    def test_zero_window_rejected(self):
        with pytest.raises(ConfigError):
            AttentionConfig(dim=4, heads=2, window=0)


class TestTransformerBlock:
    def test_zero_init_residual_identity(self):
        # freshly built blocks zero-init their output projections
        rng = np.random.default_rng(21)
        block = TransformerBlock(AttentionConfig(dim=8, heads=2), rng)
        x = np.random.default_rng(22).normal(size=(5, 8))
        assert np.array_equal(block(Tensor(x)).data, x)

    def test_no_ctx_is_self_plus_mlp(self):
        rng = np.random.default_rng(23)
        block = TransformerBlock(AttentionConfig(dim=4, heads=2), rng, cross=True)
        randomize_params(block, rng)
        x = np.random.default_rng(24).normal(size=(3, 4))
        expect = Tensor(x)
        expect = expect + block.attn(block.norm_self(expect))
        from coge.tensor import gelu
        expect = expect + block.mlp_out(gelu(block.mlp_in(block.norm_mlp(expect))))
        assert np.allclose(block(Tensor(x)).data, expect.data, atol=1e-14)

    def test_gradcheck(self):
        rng = np.random.default_rng(25)
        block = TransformerBlock(AttentionConfig(dim=4, heads=2), rng, cross=True)
        randomize_params(block, rng)
        x = Param(rng.normal(size=(4, 4)))
        ctx = Param(rng.normal(size=(3, 4)))
        weight = Tensor(rng.normal(size=(4, 4)))
        res = gradcheck(lambda: (block(x, ctx) * weight).sum(), [x, ctx] + block.params())
        assert res.passed, res.summary()

    def test_attention_rows_sum_to_one(self):
        # checked on the softmax output inside a tiny manual attention
        from coge.tensor import softmax
        rng = np.random.default_rng(26)
        scores = Tensor(rng.normal(size=(2, 5, 5)))
        w = softmax(scores, axis=-1).data
        assert np.allclose(w.sum(axis=-1), 1.0, atol=1e-6)
