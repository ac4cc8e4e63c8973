"""numpy-backed tensors with reverse-mode gradient recording.

Every trained operation in the package is built from the primitives here so
that analytic gradients can be certified against the finite-difference oracle
in gradcheck.py.  Tensors are immutable after construction; operations record
a graph and ``backward()`` accumulates gradients into every participating
tensor that has ``requires_grad`` set.

Float64 is the default dtype (tests and oracles run in it); float32 is used
for training speed and lossless checkpoint round-trips.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ShapeError

FLOAT_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))

# sqrt(2/pi), used by the tanh-approximation GELU
_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


class Tensor:
    """Dense n-d array of real scalars plus an optional gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in FLOAT_DTYPES:
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- autograd ------------------------------------------------------------

    def backward(self) -> None:
        """Reverse-accumulate d(self)/d(leaf) for every recorded ancestor."""
        if self.data.size != 1:
            raise ShapeError(f"backward() needs a scalar, got shape {self.data.shape}")
        order = _toposort(self)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def zero_grad(self) -> None:
        self.grad = None

    # -- operator sugar --------------------------------------------------------

    def __add__(self, other):
        return add(self, _lift(other, self.dtype))

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, _lift(other, self.dtype))

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __sub__(self, other):
        return add(self, neg(_lift(other, self.dtype)))

    def __rsub__(self, other):
        return add(_lift(other, self.dtype), neg(self))

    def __truediv__(self, other):
        other = _lift(other, self.dtype)
        return mul(self, reciprocal(other))

    def __rtruediv__(self, other):
        return mul(_lift(other, self.dtype), reciprocal(self))

    def __pow__(self, exponent):
        return pow_const(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)

    @property
    def T(self):
        if self.data.ndim != 2:
            raise ShapeError(f".T needs a 2-d tensor, got shape {self.data.shape}")
        return transpose(self, (1, 0))

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, axes):
        return transpose(self, axes)

    def sum(self, axis=None, keepdims: bool = False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return tmean(self, axis=axis, keepdims=keepdims)


class Param(Tensor):
    """A named trainable tensor; requires_grad is always on."""

    __slots__ = ("name",)

    def __init__(self, data, name: str = "", dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)
        self.name = name

    def __repr__(self):
        return f"Param({self.name!r}, shape={self.data.shape})"


def _toposort(root: Tensor):
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def _lift(value, dtype) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=dtype))


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad and t._backward is None:
        return
    if t.grad is None:
        t.grad = np.array(g, copy=True)
    else:
        t.grad = t.grad + g


def _result(data: np.ndarray, parents, backward) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad or p._backward is not None for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    if grad.shape == tuple(shape):
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# -- elementwise binary ops ---------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    data = a.data + b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    return _result(data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data * b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g * b.data, a.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.shape))

    return _result(data, (a, b), backward)


def neg(a: Tensor) -> Tensor:
    def backward(g):
        _accumulate(a, -g)

    return _result(-a.data, (a,), backward)


def reciprocal(a: Tensor) -> Tensor:
    data = 1.0 / a.data

    def backward(g):
        _accumulate(a, -g * data * data)

    return _result(data, (a,), backward)


def pow_const(a: Tensor, exponent) -> Tensor:
    e = float(exponent)
    data = a.data**e

    def backward(g):
        _accumulate(a, g * e * a.data ** (e - 1.0))

    return _result(data, (a,), backward)


# -- elementwise unary ops ----------------------------------------------------


def exp(a: Tensor) -> Tensor:
    data = np.exp(a.data)

    def backward(g):
        _accumulate(a, g * data)

    return _result(data, (a,), backward)


def log(a: Tensor) -> Tensor:
    def backward(g):
        _accumulate(a, g / a.data)

    return _result(np.log(a.data), (a,), backward)


def sqrt(a: Tensor) -> Tensor:
    data = np.sqrt(a.data)

    def backward(g):
        # subgradient guard: the derivative is unbounded at exactly zero
        _accumulate(a, g * 0.5 / np.maximum(data, 1e-300))

    return _result(data, (a,), backward)


def absolute(a: Tensor) -> Tensor:
    def backward(g):
        _accumulate(a, g * np.sign(a.data))

    return _result(np.abs(a.data), (a,), backward)


def tanh(a: Tensor) -> Tensor:
    data = np.tanh(a.data)

    def backward(g):
        _accumulate(a, g * (1.0 - data * data))

    return _result(data, (a,), backward)


def sigmoid(a: Tensor) -> Tensor:
    data = 1.0 / (1.0 + np.exp(-a.data))

    def backward(g):
        _accumulate(a, g * data * (1.0 - data))

    return _result(data, (a,), backward)


def gelu(a: Tensor) -> Tensor:
    """GELU via the tanh approximation 0.5*x*(1 + tanh(c*(x + 0.044715*x^3)))."""
    x = a.data
    inner = _GELU_C * (x + _GELU_A * x**3)
    t = np.tanh(inner)
    data = 0.5 * x * (1.0 + t)

    def backward(g):
        dinner = _GELU_C * (1.0 + 3.0 * _GELU_A * x * x)
        d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner
        _accumulate(a, g * d)

    return _result(data, (a,), backward)


# -- shape ops ------------------------------------------------------------------


def reshape(a: Tensor, shape) -> Tensor:
    data = a.data.reshape(shape)

    def backward(g):
        _accumulate(a, g.reshape(a.shape))

    return _result(data, (a,), backward)


def transpose(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))

    def backward(g):
        _accumulate(a, g.transpose(inverse))

    return _result(a.data.transpose(axes), (a,), backward)


def getitem(a: Tensor, key) -> Tensor:
    data = a.data[key]

    def backward(g):
        gx = np.zeros_like(a.data)
        np.add.at(gx, key, g)
        _accumulate(a, gx)

    return _result(data, (a,), backward)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    data = np.concatenate([t.data for t in tensors], axis=axis)
    extents = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + extents)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            _accumulate(t, g[tuple(sl)])

    return _result(data, tuple(tensors), backward)


def index_hw(a: Tensor, rows: np.ndarray, cols: np.ndarray) -> Tensor:
    """Gather along the trailing two axes; used for replicate pad and crop."""
    key = (Ellipsis, rows[:, None], cols[None, :])
    data = a.data[key]

    def backward(g):
        gx = np.zeros_like(a.data)
        np.add.at(gx, key, g)
        _accumulate(a, gx)

    return _result(data, (a,), backward)


def replicate_pad2d(a: Tensor, pads) -> Tensor:
    """Edge-replicating pad of the trailing two axes; pads = (top, bottom, left, right)."""
    top, bottom, left, right = pads
    h, w = a.shape[-2], a.shape[-1]
    rows = np.clip(np.arange(-top, h + bottom), 0, h - 1)
    cols = np.clip(np.arange(-left, w + right), 0, w - 1)
    return index_hw(a, rows, cols)


# -- reductions -------------------------------------------------------------------


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            _accumulate(a, np.broadcast_to(g, a.shape).copy())
            return
        if not keepdims:
            axes = axis if isinstance(axis, tuple) else (axis,)
            g = np.expand_dims(g, axes)
        _accumulate(a, np.broadcast_to(g, a.shape).copy())

    return _result(data, (a,), backward)


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = a.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = 1
        for ax in axes:
            count *= a.shape[ax]
    return tsum(a, axis=axis, keepdims=keepdims) * (1.0 / count)


# -- linear algebra -----------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2-d operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner extents differ: {a.shape} @ {b.shape}")
    data = a.data @ b.data

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        _accumulate(a, _unbroadcast(ga, a.shape))
        _accumulate(b, _unbroadcast(gb, b.shape))

    return _result(data, (a, b), backward)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """y[..., o] = sum_i x[..., i] * w[o, i] (+ b[o]); w stored [out, in]."""
    if x.shape[-1] != w.shape[1]:
        raise ShapeError(f"linear: input shape {x.shape} does not match weight shape {w.shape}")
    lead = x.shape[:-1]
    flat = reshape(x, (-1, x.shape[-1])) if x.ndim != 2 else x
    out = matmul(flat, transpose(w, (1, 0)))
    if b is not None:
        if b.shape != (w.shape[0],):
            raise ShapeError(f"linear: bias shape {b.shape} does not match weight shape {w.shape}")
        out = add(out, b)
    if x.ndim != 2:
        out = reshape(out, lead + (w.shape[0],))
    return out


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * data).sum(axis=axis, keepdims=True)
        _accumulate(x, data * (g - dot))

    return _result(data, (x,), backward)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis to zero mean / unit variance, then affine."""
    if gain.shape != (x.shape[-1],) or bias.shape != (x.shape[-1],):
        raise ShapeError(
            f"layer_norm: affine shapes {gain.shape}/{bias.shape} do not match input {x.shape}"
        )
    mu = tmean(x, axis=-1, keepdims=True)
    centered = x - mu
    var = tmean(centered * centered, axis=-1, keepdims=True)
    inv = pow_const(var + eps, -0.5)
    return centered * inv * gain + bias


# -- convolution ------------------------------------------------------------------


def conv2d(x: Tensor, kernel: Tensor, padding=None) -> Tensor:
    """Same-size cross-correlation of [C,H,W] with [Co,C,kh,kw]; zero padding.

    Odd kernel extents only; padding, when given, must equal ((kh-1)/2, (kw-1)/2).
    """
    if x.ndim != 3 or kernel.ndim != 4:
        raise ShapeError(f"conv2d: need [C,H,W] and [Co,C,kh,kw], got {x.shape}, {kernel.shape}")
    c_out, c_in, kh, kw = kernel.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"conv2d: unsupported even kernel extent {kh}x{kw}")
    if x.shape[0] != c_in:
        raise ShapeError(f"conv2d: input shape {x.shape} does not match kernel shape {kernel.shape}")
    same = ((kh - 1) // 2, (kw - 1) // 2)
    if padding is not None and tuple(padding) != same:
        raise ShapeError(f"conv2d: padding {tuple(padding)} is not the same-size padding {same}")
    ph, pw = same
    _, h, w = x.shape

    xp = np.pad(x.data, ((0, 0), (ph, ph), (pw, pw)))
    windows = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
    # [C, H, W, kh, kw] -> [H*W, C*kh*kw]
    cols = windows.transpose(1, 2, 0, 3, 4).reshape(h * w, c_in * kh * kw)
    kmat = kernel.data.reshape(c_out, c_in * kh * kw)
    data = (cols @ kmat.T).T.reshape(c_out, h, w)

    def backward(g):
        gmat = g.reshape(c_out, h * w).T  # [H*W, Co]
        if kernel.requires_grad or kernel._backward is not None:
            _accumulate(kernel, (gmat.T @ cols).reshape(kernel.shape))
        if x.requires_grad or x._backward is not None:
            gcols = (gmat @ kmat).reshape(h, w, c_in, kh, kw)
            gxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, i : i + h, j : j + w] += gcols[:, :, :, i, j].transpose(2, 0, 1)
            _accumulate(x, gxp[:, ph : ph + h, pw : pw + w] if (ph or pw) else gxp)

    return _result(data, (x, kernel), backward)


# -- misc helpers ------------------------------------------------------------------


def stack(tensors, axis: int = 0) -> Tensor:
    expanded = []
    for t in tensors:
        shape = list(t.shape)
        shape.insert(axis if axis >= 0 else len(shape) + 1 + axis, 1)
        expanded.append(reshape(t, tuple(shape)))
    return concat(expanded, axis=axis)


def assert_finite(t: Tensor, label: str = "tensor") -> Tensor:
    if not np.all(np.isfinite(t.data)):
        raise FloatingPointError(f"{label} contains non-finite values")
    return t
