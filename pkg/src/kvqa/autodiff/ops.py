"""Primitive-operation catalogue: forward rules and their adjoints.

Everything the reasoning model computes is composed from these ops, so the
finite-difference suite in the tests only has to certify this file once.
Softmax and cross-entropy subtract the row max before exponentiating, which
keeps them finite for arbitrarily large logits.
"""

from __future__ import annotations

import numpy as np

from .tensor import Function, Tensor

LAYER_NORM_EPS = 1e-5


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Add(Function):
    op_name = "add"

    def forward(self, a, b):
        self.shapes = (a.shape, b.shape)
        return a + b

    def backward(self, grad):
        sa, sb = self.shapes
        ga = _unbroadcast(grad, sa) if self.needs[0] else None
        gb = _unbroadcast(grad, sb) if self.needs[1] else None
        return ga, gb


class Sub(Function):
    op_name = "sub"

    def forward(self, a, b):
        self.shapes = (a.shape, b.shape)
        return a - b

    def backward(self, grad):
        sa, sb = self.shapes
        ga = _unbroadcast(grad, sa) if self.needs[0] else None
        gb = _unbroadcast(-grad, sb) if self.needs[1] else None
        return ga, gb


class Neg(Function):
    op_name = "neg"

    def forward(self, a):
        return -a

    def backward(self, grad):
        return (-grad,)


class Mul(Function):
    """Elementwise (Hadamard) product, with broadcasting."""

    op_name = "mul"

    def forward(self, a, b):
        self.a, self.b = a, b
        return a * b

    def backward(self, grad):
        ga = _unbroadcast(grad * self.b, self.a.shape) if self.needs[0] else None
        gb = _unbroadcast(grad * self.a, self.b.shape) if self.needs[1] else None
        return ga, gb


class Scale(Function):
    """Multiplication by a python scalar constant (not differentiated)."""

    op_name = "scale"

    def forward(self, a, factor):
        self.factor = factor
        return a * factor

    def backward(self, grad):
        return (grad * self.factor,)


class MatMul(Function):
    """Matrix product for 1-D/2-D operands, matching numpy ``@`` semantics."""

    op_name = "matmul"

    def forward(self, a, b):
        if a.ndim > 2 or b.ndim > 2 or a.ndim == 0 or b.ndim == 0:
            raise ValueError(f"matmul supports 1-D/2-D operands, got {a.ndim}-D @ {b.ndim}-D")
        self.a, self.b = a, b
        return np.asarray(a @ b)  # 1-D @ 1-D would otherwise yield a numpy scalar

    def backward(self, grad):
        a, b = self.a, self.b
        ga = gb = None
        if self.needs[0]:
            if b.ndim == 1 and a.ndim == 1:
                ga = grad * b
            elif b.ndim == 1:  # (m,n) @ (n,) -> (m,)
                ga = np.outer(grad, b)
            elif a.ndim == 1:  # (n,) @ (n,k) -> (k,)
                ga = b @ grad
            else:
                ga = grad @ b.T
        if self.needs[1]:
            if a.ndim == 1 and b.ndim == 1:
                gb = grad * a
            elif a.ndim == 1:  # (n,) @ (n,k)
                gb = np.outer(a, grad)
            elif b.ndim == 1:  # (m,n) @ (n,)
                gb = a.T @ grad
            else:
                gb = a.T @ grad
        return ga, gb


class Concat(Function):
    """Concatenation along an axis; the adjoint splits the gradient back."""

    op_name = "concat"

    def forward(self, *arrays, axis=0):
        self.axis = axis
        self.sizes = [a.shape[axis] for a in arrays]
        return np.concatenate(arrays, axis=axis)

    def backward(self, grad):
        splits = np.cumsum(self.sizes)[:-1]
        pieces = np.split(grad, splits, axis=self.axis)
        return tuple(p if need else None for p, need in zip(pieces, self.needs))


class Index(Function):
    """Basic (non-fancy) indexing; gradient scatters into a zero buffer."""

    op_name = "index"

    def forward(self, a, key):
        self.key = key
        self.in_shape = a.shape
        out = a[key]
        return np.array(out) if np.isscalar(out) else out.copy()

    def backward(self, grad):
        g = np.zeros(self.in_shape, dtype=grad.dtype)
        g[self.key] = grad
        return (g,)


class Reshape(Function):
    op_name = "reshape"

    def forward(self, a, shape):
        self.in_shape = a.shape
        return a.reshape(shape)

    def backward(self, grad):
        return (grad.reshape(self.in_shape),)


class Transpose(Function):
    """2-D transpose; the adjoint transposes the gradient back."""

    op_name = "transpose"

    def forward(self, a):
        if a.ndim != 2:
            raise ValueError(f"transpose expects a matrix, got shape {a.shape}")
        return a.T.copy()

    def backward(self, grad):
        return (grad.T,)


class Sum(Function):
    op_name = "sum"

    def forward(self, a, axis=None):
        self.in_shape = a.shape
        self.axis = axis
        return a.sum(axis=axis)

    def backward(self, grad):
        if self.axis is None:
            return (np.broadcast_to(grad, self.in_shape).copy(),)
        g = np.expand_dims(grad, self.axis)
        return (np.broadcast_to(g, self.in_shape).copy(),)


class Mean(Function):
    op_name = "mean"

    def forward(self, a):
        self.n = a.size
        self.in_shape = a.shape
        return np.asarray(a.mean())

    def backward(self, grad):
        return (np.full(self.in_shape, grad / self.n, dtype=grad.dtype),)


class Relu(Function):
    op_name = "relu"

    def forward(self, a):
        self.mask = a > 0
        return np.where(self.mask, a, 0.0)

    def backward(self, grad):
        return (grad * self.mask,)


class Elu(Function):
    """Exponential linear unit with alpha fixed at 1."""

    op_name = "elu"

    def forward(self, a):
        out = np.where(a > 0, a, np.expm1(np.minimum(a, 0.0)))
        self.out = out
        self.mask = a > 0
        return out

    def backward(self, grad):
        return (grad * np.where(self.mask, 1.0, self.out + 1.0),)


class Tanh(Function):
    op_name = "tanh"

    def forward(self, a):
        self.out = np.tanh(a)
        return self.out

    def backward(self, grad):
        return (grad * (1.0 - self.out * self.out),)


class Sigmoid(Function):
    op_name = "sigmoid"

    def forward(self, a):
        out = np.empty_like(a)
        pos = a >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
        ea = np.exp(a[~pos])
        out[~pos] = ea / (1.0 + ea)
        self.out = out
        return out

    def backward(self, grad):
        return (grad * self.out * (1.0 - self.out),)


class Softmax(Function):
    """Max-subtracted softmax along one axis; rows sum to one."""

    op_name = "softmax"

    def forward(self, a, axis=-1):
        self.axis = axis
        shifted = a - a.max(axis=axis, keepdims=True)
        e = np.exp(shifted)
        self.out = e / e.sum(axis=axis, keepdims=True)
        return self.out

    def backward(self, grad):
        y = self.out
        dot = (grad * y).sum(axis=self.axis, keepdims=True)
        return ((grad - dot) * y,)


class LayerNorm(Function):
    """Normalize the last axis to zero mean / unit variance, then rescale."""

    op_name = "layer_norm"

    def forward(self, a, gain, bias):
        mean = a.mean(axis=-1, keepdims=True)
        centered = a - mean
        var = (centered * centered).mean(axis=-1, keepdims=True)
        self.inv_std = 1.0 / np.sqrt(var + LAYER_NORM_EPS)
        self.normed = centered * self.inv_std
        self.gain = gain
        return self.normed * gain + bias

    def backward(self, grad):
        n = grad.shape[-1]
        x_hat = self.normed
        g = grad * self.gain
        # d/dx of (x - mean) * inv_std with inv_std depending on x
        gx = self.inv_std * (
            g
            - g.mean(axis=-1, keepdims=True)
            - x_hat * (g * x_hat).mean(axis=-1, keepdims=True)
        )
        ggain = (grad * x_hat).reshape(-1, n).sum(axis=0) if self.needs[1] else None
        gbias = grad.reshape(-1, n).sum(axis=0) if self.needs[2] else None
        return gx if self.needs[0] else None, ggain, gbias


class Dropout(Function):
    """Inverted dropout: kept activations are scaled by 1/(1-rate)."""

    op_name = "dropout"

    def forward(self, a, rate, rng):
        keep = 1.0 - rate
        self.mask = (rng.random(a.shape) < keep).astype(a.dtype) / keep
        return a * self.mask

    def backward(self, grad):
        return (grad * self.mask,)


class MaxReduce(Function):
    """Max pooling along one axis.

    Ties route the gradient to the first maximal element; the reduction is
    not differentiable at ties, and the gradient checker excludes them.
    """

    op_name = "max_pool"

    def forward(self, a, axis=0):
        self.axis = axis
        self.in_shape = a.shape
        self.argmax = a.argmax(axis=axis)
        return a.max(axis=axis)

    def backward(self, grad):
        g = np.zeros(self.in_shape, dtype=grad.dtype)
        idx = list(np.indices(grad.shape))
        idx.insert(self.axis if self.axis >= 0 else self.axis + len(self.in_shape), self.argmax)
        g[tuple(idx)] = grad
        return (g,)


class EmbeddingLookup(Function):
    """Gather rows of a table; the adjoint scatter-adds into the table."""

    op_name = "embedding_lookup"

    def forward(self, table, ids):
        self.ids = np.asarray(ids, dtype=np.int64)
        self.n_rows = table.shape[0]
        return table[self.ids]

    def backward(self, grad):
        g = np.zeros((self.n_rows,) + grad.shape[len(self.ids.shape):], dtype=grad.dtype)
        np.add.at(g, self.ids, grad)
        return (g,)


class LstmCell(Function):
    """One LSTM step, fused into a single tape node for speed.

    Inputs: x (I,), h (H,), c (H,), w_in (4H,I), w_rec (4H,H), bias (4H,).
    Gate order along the 4H axis is input, forget, candidate, output.
    Output is packed as a (2,H) array: row 0 the new hidden state, row 1 the
    new cell state.
    """

    op_name = "lstm_cell"

    def forward(self, x, h, c, w_in, w_rec, bias):
        hidden = h.shape[0]
        z = w_in @ x + w_rec @ h + bias
        zi, zf, zg, zo = (z[k * hidden:(k + 1) * hidden] for k in range(4))
        i = _sigmoid(zi)
        f = _sigmoid(zf)
        g = np.tanh(zg)
        o = _sigmoid(zo)
        c_new = f * c + i * g
        tanh_c = np.tanh(c_new)
        h_new = o * tanh_c
        self.saved = (x, h, c, w_in, w_rec, i, f, g, o, tanh_c)
        return np.stack([h_new, c_new])

    def backward(self, grad):
        x, h, c, w_in, w_rec, i, f, g, o, tanh_c = self.saved
        dh, dc_in = grad[0], grad[1]
        dc = dc_in + dh * o * (1.0 - tanh_c * tanh_c)
        do = dh * tanh_c
        di = dc * g
        df = dc * c
        dg = dc * i
        dz = np.concatenate([
            di * i * (1.0 - i),
            df * f * (1.0 - f),
            dg * (1.0 - g * g),
            do * o * (1.0 - o),
        ])
        gx = w_in.T @ dz if self.needs[0] else None
        gh = w_rec.T @ dz if self.needs[1] else None
        gc = dc * f if self.needs[2] else None
        gwin = np.outer(dz, x) if self.needs[3] else None
        gwrec = np.outer(dz, h) if self.needs[4] else None
        gbias = dz if self.needs[5] else None
        return gx, gh, gc, gwin, gwrec, gbias


class CrossEntropy(Function):
    """Cross-entropy of raw logits against one gold index, log-softmax fused."""

    op_name = "cross_entropy"

    def forward(self, logits, target):
        if logits.ndim != 1:
            raise ValueError(f"expected a logit vector, got shape {logits.shape}")
        if not 0 <= target < logits.shape[0]:
            raise IndexError(f"answer index {target} out of range for {logits.shape[0]} classes")
        self.target = target
        shifted = logits - logits.max()
        log_z = np.log(np.exp(shifted).sum())
        self.softmax = np.exp(shifted - log_z)
        return np.asarray(log_z - shifted[target])

    def backward(self, grad):
        g = self.softmax.copy()
        g[self.target] -= 1.0
        return (g * grad,)


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# Functional wrappers ----------------------------------------------------


def add(a, b):
    return Add.apply(a, b)


def sub(a, b):
    return Sub.apply(a, b)


def neg(a):
    return Neg.apply(a)


def mul(a, b):
    return Mul.apply(a, b)


def scale(a, factor: float):
    return Scale.apply(a, factor=factor)


def matmul(a, b):
    return MatMul.apply(a, b)


def concat(tensors, axis=0):
    return Concat.apply(*tensors, axis=axis)


def index(a, key):
    return Index.apply(a, key=key)


def reshape(a, shape):
    return Reshape.apply(a, shape=shape)


def transpose(a):
    return Transpose.apply(a)


def tsum(a, axis=None):
    return Sum.apply(a, axis=axis)


def mean(a):
    return Mean.apply(a)


def relu(a):
    return Relu.apply(a)


def elu(a):
    return Elu.apply(a)


def tanh(a):
    return Tanh.apply(a)


def sigmoid(a):
    return Sigmoid.apply(a)


def softmax(a, axis=-1):
    return Softmax.apply(a, axis=axis)


def layer_norm(a, gain, bias):
    return LayerNorm.apply(a, gain, bias)


def dropout(a, rate: float, rng):
    """Inverted dropout; identity when ``rng`` is None (evaluation) or rate 0."""
    if rng is None or rate <= 0.0:
        return a
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    return Dropout.apply(a, rate=rate, rng=rng)


def max_pool(a, axis=0):
    return MaxReduce.apply(a, axis=axis)


def embedding_lookup(table, ids):
    return EmbeddingLookup.apply(table, ids=ids)


def lstm_cell(x, h, c, w_in, w_rec, bias):
    """Run one LSTM step; returns (new_hidden, new_cell) tensors."""
    packed = LstmCell.apply(x, h, c, w_in, w_rec, bias)
    return index(packed, 0), index(packed, 1)


def cross_entropy(logits, target: int):
    return CrossEntropy.apply(logits, target=int(target))


def stack(tensors):
    """Stack scalars into a vector (used to reduce per-sample losses)."""
    return concat([reshape(t, (1,)) for t in tensors], axis=0)
