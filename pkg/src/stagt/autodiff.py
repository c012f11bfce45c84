"""A small tape-free reverse-mode autodiff over numpy arrays.

Each operation accepts plain arrays or :class:`Tensor` objects. When none of
the inputs is a Tensor the operation just returns an ndarray, so the model
code runs unchanged for inference and for gradient evaluation.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from . import numerics


class Tensor:
    __slots__ = ("value", "grad", "parents", "backward_fn", "name")

    def __init__(self, value, parents=(), backward_fn=None, name=None):
        self.value = np.asarray(value, dtype=numerics.DTYPE)
        self.grad = None
        self.parents = parents
        self.backward_fn = backward_fn
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def backward(self, seed=None):
        """Accumulate d(self)/d(leaf) into ``.grad`` of every reachable Tensor."""
        order = _topological(self)
        for node in order:
            node.grad = None
        self.grad = np.ones_like(self.value) if seed is None else np.asarray(seed, dtype=float)
        for node in reversed(order):
            if node.backward_fn is None or node.grad is None:
                continue
            grads = node.backward_fn(node.grad)
            for parent, g in zip(node.parents, grads):
                if g is None or not isinstance(parent, Tensor):
                    continue
                parent.grad = g if parent.grad is None else parent.grad + g


def _topological(root):
    order, seen = [], set()
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
        for p in node.parents:
            if isinstance(p, Tensor) and id(p) not in seen:
                stack.append((p, False))
    return order


def value(x):
    return x.value if isinstance(x, Tensor) else x


def _tracked(*xs):
    return any(isinstance(x, Tensor) for x in xs)


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (reverses numpy broadcasting)."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# -- elementwise ----------------------------------------------------------

def add(a, b):
    out = value(a) + value(b)
    if not _tracked(a, b):
        return out
    sa, sb = np.shape(value(a)), np.shape(value(b))
    return Tensor(out, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b):
    out = value(a) - value(b)
    if not _tracked(a, b):
        return out
    sa, sb = np.shape(value(a)), np.shape(value(b))
    return Tensor(out, (a, b), lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def mul(a, b):
    va, vb = value(a), value(b)
    out = va * vb
    if not _tracked(a, b):
        return out
    sa, sb = np.shape(va), np.shape(vb)
    return Tensor(out, (a, b), lambda g: (_unbroadcast(g * vb, sa), _unbroadcast(g * va, sb)))


def tanh(a):
    out = np.tanh(value(a))
    if not _tracked(a):
        return out
    return Tensor(out, (a,), lambda g: (g * (1.0 - out * out),))


def sigmoid(a):
    out = numerics.sigmoid(value(a))
    if not _tracked(a):
        return out
    return Tensor(out, (a,), lambda g: (g * out * (1.0 - out),))


def log(a):
    va = value(a)
    out = np.log(va)
    if not _tracked(a):
        return out
    return Tensor(out, (a,), lambda g: (g / va,))


def clip(a, lo, hi):
    va = value(a)
    out = np.clip(va, lo, hi)
    if not _tracked(a):
        return out
    inside = (va >= lo) & (va <= hi)
    return Tensor(out, (a,), lambda g: (g * inside,))


# -- linear algebra and reshaping -----------------------------------------

def matmul(a, b):
    va, vb = value(a), value(b)
    out = va @ vb
    if not _tracked(a, b):
        return out
    return Tensor(out, (a, b), lambda g: (g @ vb.T, va.T @ g))


def sparse_matmul(m: sp.csr_matrix, b):
    """``m @ b`` for a constant sparse ``m``."""
    out = np.asarray(m @ value(b))
    if not _tracked(b):
        return out
    mt = m.T.tocsr()
    return Tensor(out, (None, b), lambda g: (None, np.asarray(mt @ g)))


def concat_cols(blocks):
    out = numerics.concat_cols([value(b) for b in blocks])
    if not _tracked(*blocks):
        return out
    edges = np.cumsum([0] + [np.shape(value(b))[1] for b in blocks])

    def backward(g):
        return tuple(g[:, lo:hi] for lo, hi in zip(edges[:-1], edges[1:]))

    return Tensor(out, tuple(blocks), backward)


def getitem(a, idx):
    va = value(a)
    out = va[idx]
    if not _tracked(a):
        return out

    def backward(g):
        full = np.zeros_like(va)
        np.add.at(full, idx, g)
        return (full,)

    return Tensor(out, (a,), backward)


def take_rows(a, rows):
    return getitem(a, (np.asarray(rows),))


def total(a):
    """Sum of all entries as a 0-d value."""
    va = value(a)
    out = np.asarray(va.sum())
    if not _tracked(a):
        return out
    return Tensor(out, (a,), lambda g: (np.full_like(va, g),))


def mean_rows(a):
    """Column-wise mean over rows: N x d -> 1 x d."""
    va = value(a)
    n = va.shape[0]
    out = va.mean(axis=0, keepdims=True)
    if not _tracked(a):
        return out
    return Tensor(out, (a,), lambda g: (np.broadcast_to(g / n, va.shape).copy(),))


# -- fused row kernels ----------------------------------------------------

def softmax_rows(a):
    out = numerics.softmax_rows(value(a))
    if not _tracked(a):
        return out

    def backward(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return Tensor(out, (a,), backward)


def layer_norm_rows(a, gain, bias, eps=1e-5):
    va, vg, vb = value(a), value(gain), value(bias)
    mu = va.mean(axis=-1, keepdims=True)
    centered = va - mu
    inv_std = 1.0 / np.sqrt((centered * centered).mean(axis=-1, keepdims=True) + eps)
    xhat = centered * inv_std
    out = xhat * vg + vb
    if not _tracked(a, gain, bias):
        return out

    def backward(g):
        gx = g * vg
        da = inv_std * (gx - gx.mean(axis=-1, keepdims=True)
                        - xhat * (gx * xhat).mean(axis=-1, keepdims=True))
        return (da,
                _unbroadcast(g * xhat, np.shape(vg)),
                _unbroadcast(g, np.shape(vb)))

    return Tensor(out, (a, gain, bias), backward)


def attention(q, k, v):
    """softmax(q k^T / sqrt(d_k)) v, returning (output, attention matrix).

    Only the attention matrix is retained for the backward pass. N x N work
    is done in place to keep a single extra N x N buffer alive.
    """
    vq, vk, vv = value(q), value(k), value(v)
    scale = 1.0 / np.sqrt(vq.shape[1])
    attn = vq @ vk.T
    attn *= scale
    attn -= attn.max(axis=1, keepdims=True)
    np.exp(attn, out=attn)
    attn /= attn.sum(axis=1, keepdims=True)
    out = attn @ vv
    if not _tracked(q, k, v):
        return out, attn

    def backward(g):
        d = g @ vv.T
        d -= np.einsum("ij,ij->i", d, attn)[:, None]
        d *= attn
        d *= scale
        return (d @ vk, d.T @ vq, attn.T @ g)

    return Tensor(out, (q, k, v), backward), attn
