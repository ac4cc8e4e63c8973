"""Core tensor ops: forward values against hand oracles, gradients against FD."""

import math

import numpy as np
import pytest

from coge import tensor as T
from coge.errors import ShapeError
from coge.gradcheck import gradcheck
from coge.tensor import Param, Tensor


def _param(rng, *shape):
    return Param(rng.normal(0.0, 0.7, shape))


class TestLinear:
    def test_identity_weights(self):
        x = Tensor([1.0, 2.0])
        w = Tensor(np.eye(2))
        b = Tensor([0.0, 0.0])
        assert np.array_equal(T.linear(x, w, b).data, [1.0, 2.0])

    def test_hand_case(self):
        # 1*2 + 1*3 + 1 = 6
        y = T.linear(Tensor([1.0, 1.0]), Tensor([[2.0, 3.0]]), Tensor([1.0]))
        assert np.allclose(y.data, [6.0])

    def test_zero_input_gives_bias(self):
        x = Tensor(np.zeros(4))
        w = Tensor(np.arange(12.0).reshape(3, 4))
        b = Tensor([5.0, -1.0, 2.5])
        assert np.array_equal(T.linear(x, w, b).data, b.data)

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(ShapeError) as err:
            T.linear(Tensor(np.zeros(3)), Tensor(np.zeros((2, 4))), Tensor(np.zeros(2)))
        assert "(3,)" in str(err.value) and "(2, 4)" in str(err.value)

    def test_batched_leading_dims(self):
        rng = np.random.default_rng(0)
        x = Tensor(rng.normal(size=(2, 5, 3)))
        w = Tensor(rng.normal(size=(4, 3)))
        b = Tensor(rng.normal(size=4))
        y = T.linear(x, w, b)
        assert y.shape == (2, 5, 4)
        expect = x.data @ w.data.T + b.data
        assert np.allclose(y.data, expect)


class TestSoftmax:
    def test_symmetry(self):
        assert np.allclose(T.softmax(Tensor([0.0, 0.0])).data, [0.5, 0.5])

    def test_shift_invariance(self):
        assert np.allclose(T.softmax(Tensor([1000.0, 1000.0])).data, [0.5, 0.5])

    def test_hand_case(self):
        y = T.softmax(Tensor([0.0, math.log(3.0)]))
        assert np.allclose(y.data, [0.25, 0.75])

    def test_rows_sum_to_one_and_in_range(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            x = Tensor(rng.uniform(-50, 50, size=(4, 7)))
            y = T.softmax(x, axis=1).data
            assert np.all(y > 0) and np.all(y <= 1)
            assert np.allclose(y.sum(axis=1), 1.0, atol=1e-6)


class TestGelu:
    def test_zero(self):
        assert T.gelu(Tensor([0.0])).data[0] == 0.0

    def test_value_at_three(self):
        # evaluate the tanh approximation independently
        inner = math.sqrt(2.0 / math.pi) * (3.0 + 0.044715 * 27.0)
        expect = 0.5 * 3.0 * (1.0 + math.tanh(inner))
        got = float(T.gelu(Tensor([3.0])).data[0])
        assert abs(got - expect) < 1e-12
        assert abs(got - 2.9964) < 1e-3


class TestLayerNorm:
    def test_constant_slice_maps_to_bias(self):
        x = Tensor(np.full((3, 5), 2.5))
        gain = Tensor(np.full(5, 3.0))
        bias = Tensor(np.arange(5.0))
        y = T.layer_norm(x, gain, bias)
        assert np.allclose(y.data, np.broadcast_to(np.arange(5.0), (3, 5)))

    def test_normalizes_last_axis(self):
        rng = np.random.default_rng(2)
        x = Tensor(rng.normal(3.0, 2.0, size=(6, 16)))
        y = T.layer_norm(x, Tensor(np.ones(16)), Tensor(np.zeros(16)))
        assert np.allclose(y.data.mean(axis=-1), 0.0, atol=1e-10)
        assert np.allclose(y.data.var(axis=-1), 1.0, atol=1e-3)


class TestConv2d:
    def test_identity_1x1(self):
        rng = np.random.default_rng(3)
        x = Tensor(rng.normal(size=(1, 5, 6)))
        k = Tensor(np.ones((1, 1, 1, 1)))
        assert np.allclose(T.conv2d(x, k).data, x.data)

    def test_all_ones_3x3_center(self):
        x = Tensor(np.ones((1, 3, 3)))
        k = Tensor(np.ones((1, 1, 3, 3)))
        y = T.conv2d(x, k)
        assert y.data[0, 1, 1] == 9.0
        # corners see only a 2x2 footprint under zero padding
        assert y.data[0, 0, 0] == 4.0

    def test_7x1_on_constant_image(self):
        rng = np.random.default_rng(4)
        k = Tensor(rng.normal(size=(1, 1, 7, 1)))
        s = float(k.data.sum())
        x = Tensor(np.full((1, 9, 9), 2.0))
        y = T.conv2d(x, k)
        interior = y.data[0, 3:6, :]
        assert np.allclose(interior, 2.0 * s)
        assert not np.allclose(y.data[0, 0, 0], 2.0 * s) or abs(s) < 1e-12

    def test_impulse_reproduces_kernel_footprint(self):
        x = np.zeros((1, 7, 7))
        x[0, 3, 3] = 1.0
        k = Tensor(np.arange(9.0).reshape(1, 1, 3, 3))
        y = T.conv2d(Tensor(x), k)
        # cross-correlation of an impulse reproduces the flipped-index kernel
        footprint = y.data[0, 2:5, 2:5]
        assert np.array_equal(footprint, k.data[0, 0, ::-1, ::-1])

    def test_even_kernel_rejected(self):
        with pytest.raises(ShapeError, match="even"):
            T.conv2d(Tensor(np.zeros((1, 4, 4))), Tensor(np.zeros((1, 1, 2, 2))))

    def test_explicit_padding_validated(self):
        with pytest.raises(ShapeError):
            T.conv2d(Tensor(np.zeros((1, 4, 4))), Tensor(np.zeros((1, 1, 3, 3))), padding=(0, 0))


class TestShapeOps:
    def test_reshape_transpose_preserve_multiset(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(3, 4, 5))
        y = Tensor(x).reshape(5, 12).T.reshape(4, 3, 5).transpose((2, 0, 1))
        assert sorted(x.ravel()) == sorted(y.data.ravel())

    def test_concat_and_slice_roundtrip(self):
        a = Tensor(np.arange(6.0).reshape(2, 3))
        b = Tensor(np.arange(6.0, 12.0).reshape(2, 3))
        c = T.concat([a, b], axis=0)
        assert np.array_equal(c[0:2].data, a.data)
        assert np.array_equal(c[2:4].data, b.data)

    def test_replicate_pad(self):
        x = Tensor(np.arange(4.0).reshape(1, 2, 2))
        y = T.replicate_pad2d(x, (1, 1, 1, 1))
        assert y.shape == (1, 4, 4)
        assert y.data[0, 0, 0] == 0.0 and y.data[0, 3, 3] == 3.0
        assert y.data[0, 0, 1] == 0.0 and y.data[0, 1, 0] == 0.0


class TestGradients:
    """Every differentiable primitive passes the FD oracle on random shapes."""

    def test_gradcheck_quadratic(self):
        p = Param(np.array([3.0]))
        res = gradcheck(lambda: (p * p).sum(), [p])
        assert res.passed
        assert abs(res.reports[0].analytic - 6.0) < 1e-9

    def test_linear_bias_gradient_is_ones(self):
        rng = np.random.default_rng(6)
        x = _param(rng, 4, 3)
        w = _param(rng, 2, 3)
        b = _param(rng, 2)
        out = T.linear(x, w, b).sum()
        out.backward()
        assert np.allclose(b.grad, 4.0)  # four rows, all-ones each

    @pytest.mark.parametrize("op", [
        lambda x: T.exp(x),
        lambda x: T.log(x * x + 1.2),
        lambda x: T.sqrt(x * x + 0.5),
        lambda x: T.absolute(x + 0.05),
        lambda x: T.tanh(x),
        lambda x: T.sigmoid(x),
        lambda x: T.gelu(x),
        lambda x: T.softmax(x, axis=-1),
        lambda x: x ** 3,
        lambda x: 1.0 / (x * x + 2.0),
    ])
    def test_unary_ops(self, op):
        rng = np.random.default_rng(7)
        x = _param(rng, 3, 4)
        weight = Tensor(rng.normal(size=(3, 4)))
        res = gradcheck(lambda: (op(x) * weight).sum(), [x])
        assert res.passed, res.summary()

    def test_binary_ops_with_broadcast(self):
        rng = np.random.default_rng(8)
        a = _param(rng, 3, 4)
        b = _param(rng, 4)
        res = gradcheck(lambda: ((a * b + b) * (a - 0.3)).sum(), [a, b])
        assert res.passed, res.summary()

    def test_matmul_batched(self):
        rng = np.random.default_rng(9)
        a = _param(rng, 2, 3, 4)
        b = _param(rng, 2, 4, 5)
        c = _param(rng, 5, 2)
        res = gradcheck(lambda: ((a @ b) @ c).sum(), [a, b, c])
        assert res.passed, res.summary()

    def test_linear_layer_norm_softmax_chain(self):
        rng = np.random.default_rng(10)
        x = _param(rng, 5, 6)
        w = _param(rng, 4, 6)
        b = _param(rng, 4)
        gain = _param(rng, 4)
        bias = _param(rng, 4)

        def f():
            y = T.layer_norm(T.linear(x, w, b), gain, bias)
            return (T.softmax(y, axis=-1) * Tensor(np.arange(4.0))).sum()

        res = gradcheck(f, [x, w, b, gain, bias])
        assert res.passed, res.summary()

    def test_conv2d_all_kernel_shapes(self):
        rng = np.random.default_rng(11)
        for kh, kw in [(1, 1), (3, 3), (7, 1), (1, 7)]:
            x = _param(rng, 2, 8, 8)
            k = _param(rng, 3, 2, kh, kw)
            weight = Tensor(rng.normal(size=(3, 8, 8)))
            res = gradcheck(lambda: (T.conv2d(x, k) * weight).sum(), [x, k])
            assert res.passed, f"{kh}x{kw}:\n{res.summary()}"

    def test_slice_concat_pad_ops(self):
        rng = np.random.default_rng(12)
        x = _param(rng, 2, 5, 5)

        def f():
            p = T.replicate_pad2d(x, (1, 0, 2, 1))
            y = T.concat([p[:, 0:3], p[:, 3:6]], axis=1)
            return (y * y)[:, 1:4, 2:5].sum()

        res = gradcheck(f, [x])
        assert res.passed, res.summary()

    def test_reductions(self):
        rng = np.random.default_rng(13)
        x = _param(rng, 3, 4, 2)
        res = gradcheck(
            lambda: (x.mean(axis=(1, 2)) * x.sum(axis=(0, 2), keepdims=False).mean()).sum(),
            [x],
        )
        assert res.passed, res.summary()

    @pytest.mark.filterwarnings("ignore:divide by zero")
    def test_gradcheck_rejects_nonfinite(self):
        from coge.errors import OracleError
        p = Param(np.array([0.0]))
        with pytest.raises(OracleError):
            gradcheck(lambda: T.log(p).sum(), [p])


class TestFiniteness:
    def test_public_ops_stay_finite(self):
        rng = np.random.default_rng(14)
        x = Tensor(rng.uniform(-50, 50, size=(4, 4)))
        for y in [T.softmax(x), T.gelu(x), T.sigmoid(x), T.tanh(x), T.layer_norm(
                x, Tensor(np.ones(4)), Tensor(np.zeros(4)))]:
            assert np.all(np.isfinite(y.data))
