"""Differentiable primitives.

Each function takes :class:`Tensor` (or array-like constants) and returns a
new Tensor whose backward closure maps the output gradient to one gradient per
input. Broadcasting follows numpy; gradients are summed back to input shapes.
"""

from __future__ import annotations

import numpy as np

from ..errors import DimensionError, NumericError
from .core import Tensor, as_tensor

MASK_VALUE = -1e9


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: cannot broadcast shapes {a.shape} and {b.shape}") from None


# elementwise -----------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")
    sa, sb = a.shape, b.shape
    return Tensor._from_op(
        a.data + b.data, (a, b),
        lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")
    sa, sb = a.shape, b.shape
    return Tensor._from_op(
        a.data - b.data, (a, b),
        lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)), "sub")


def mul(a, b) -> Tensor:
    """Element-wise (Hadamard) product."""
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")
    ad, bd = a.data, b.data

    def backward(g):
        return _unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)

    return Tensor._from_op(ad * bd, (a, b), backward, "mul")


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    return Tensor._from_op(a.data * a.data.dtype.type(c), (a,), lambda g: (g * c,), "scale")


def reciprocal(a) -> Tensor:
    a = as_tensor(a)
    out = 1.0 / a.data
    return Tensor._from_op(out, (a,), lambda g: (-g * out * out,), "reciprocal")


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return Tensor._from_op(out, (a,), lambda g: (g * out,), "exp")


def log(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    return Tensor._from_op(np.log(x), (a,), lambda g: (g / x,), "log")


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return Tensor._from_op(a.data * mask, (a,), lambda g: (g * mask,), "relu")


def masked_fill(a, mask: np.ndarray, value: float) -> Tensor:
    """Replace entries where ``mask`` is true by a constant (no gradient there)."""
    a = as_tensor(a)
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), a.shape)
    out = np.where(mask, a.data.dtype.type(value), a.data)
    return Tensor._from_op(out, (a,), lambda g: (np.where(mask, 0, g),), "masked_fill")


# reductions ----------------------------------------------------------------

def sum(a, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001 - mirrors numpy
    a = as_tensor(a)
    shape = a.shape

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return Tensor._from_op(np.sum(a.data, axis=axis, keepdims=keepdims), (a,), backward, "sum")


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        count = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        count = int(np.prod([a.shape[i] for i in axes]))
    return scale(sum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def max(a, axis: int = -1, keepdims: bool = False) -> Tensor:  # noqa: A001
    """Maximum along one axis; the gradient goes to the first maximal entry."""
    a = as_tensor(a)
    idx = np.expand_dims(np.argmax(a.data, axis=axis), axis)
    out = np.take_along_axis(a.data, idx, axis=axis)
    shape = a.shape

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        grad = np.zeros(shape, dtype=g.dtype)
        np.put_along_axis(grad, idx, g, axis=axis)
        return (grad,)

    if not keepdims:
        out = np.squeeze(out, axis=axis)
    return Tensor._from_op(out, (a,), backward, "max")


# shape manipulation -----------------------------------------------------------

def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    old = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"reshape: cannot reshape {old} into {tuple(shape)}") from None
    return Tensor._from_op(out, (a,), lambda g: (g.reshape(old),), "reshape")


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inverse = tuple(np.argsort(axes))
    return Tensor._from_op(
        np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inverse),), "transpose")


def swapaxes(a, i: int, j: int) -> Tensor:
    a = as_tensor(a)
    return Tensor._from_op(
        np.swapaxes(a.data, i, j), (a,), lambda g: (np.swapaxes(g, i, j),), "swapaxes")


def index(a, key) -> Tensor:
    """Basic or advanced indexing; gradients scatter-add into the source."""
    a = as_tensor(a)
    shape = a.shape

    def backward(g):
        grad = np.zeros(shape, dtype=g.dtype)
        np.add.at(grad, key, g)
        return (grad,)

    return Tensor._from_op(a.data[key], (a,), backward, "index")


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise DimensionError(
            f"concat: incompatible shapes {[t.shape for t in tensors]} on axis {axis}") from None
    cuts = np.cumsum(sizes)[:-1]
    return Tensor._from_op(out, tensors, lambda g: tuple(np.split(g, cuts, axis=axis)), "concat")


def split_heads(x, heads: int) -> Tensor:
    """(batch, length, dim) -> (batch, heads, length, dim // heads)."""
    b, n, d = x.shape
    if d % heads:
        raise DimensionError(f"split_heads: dim {d} not divisible by {heads} heads")
    return transpose(reshape(x, (b, n, heads, d // heads)), (0, 2, 1, 3))


def merge_heads(x) -> Tensor:
    """(batch, heads, length, dh) -> (batch, length, heads * dh)."""
    b, h, n, dh = x.shape
    return reshape(transpose(x, (0, 2, 1, 3)), (b, n, h * dh))


# linear algebra ------------------------------------------------------------------

def matmul(a, b) -> Tensor:
    """Matrix product over the last two axes, with numpy batch broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs at least 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: inner dimensions differ for shapes {a.shape} and {b.shape}")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError:
        raise DimensionError(f"matmul: batch dimensions differ for shapes {a.shape} and {b.shape}") from None
    ad, bd = a.data, b.data

    def backward(g):
        ga = np.matmul(g, np.swapaxes(bd, -1, -2)) if a.requires_grad else None
        gb = np.matmul(np.swapaxes(ad, -1, -2), g) if b.requires_grad else None
        return (
            None if ga is None else _unbroadcast(ga, ad.shape),
            None if gb is None else _unbroadcast(gb, bd.shape),
        )

    return Tensor._from_op(out, (a, b), backward, "matmul")


# normalisation and probabilities --------------------------------------------------

def _check_finite(x: np.ndarray, op: str) -> None:
    if not np.isfinite(x).all():
        raise NumericError(f"{op}: input contains non-finite values")


def softmax(x, axis: int = -1) -> Tensor:
    """Max-shifted softmax along ``axis``."""
    x = as_tensor(x)
    _check_finite(x.data, "softmax")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return Tensor._from_op(out, (x,), backward, "softmax")


def log_softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    _check_finite(x.data, "log_softmax")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse

    def backward(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return Tensor._from_op(out, (x,), backward, "log_softmax")


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Normalise over the last axis, then apply gain ``gamma`` and bias ``beta``."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    if gamma.shape != x.shape[-1:] or beta.shape != x.shape[-1:]:
        raise DimensionError(
            f"layer_norm: gain/bias shapes {gamma.shape}, {beta.shape} do not match {x.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    d = x.shape[-1]
    gd = gamma.data

    def backward(g):
        gx_hat = g * gd
        gx = inv / d * (d * gx_hat - gx_hat.sum(-1, keepdims=True)
                        - xhat * (gx_hat * xhat).sum(-1, keepdims=True))
        lead = tuple(range(g.ndim - 1))
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return Tensor._from_op(xhat * gd + beta.data, (x, gamma, beta), backward, "layer_norm")


def embedding(table, ids) -> Tensor:
    """Row lookup ``table[ids]``; ids is an integer array of any shape."""
    table = as_tensor(table)
    ids = np.asarray(ids)
    vocab, dim = table.shape
    if ids.size and (ids.min() < 0 or ids.max() >= vocab):
        raise IndexError(f"embedding: id out of range for vocabulary of size {vocab}")

    def backward(g):
        grad = np.zeros((vocab, dim), dtype=g.dtype)
        np.add.at(grad, ids.reshape(-1), g.reshape(-1, dim))
        return (grad,)

    return Tensor._from_op(table.data[ids], (table,), backward, "embedding")


def dropout(x, rate: float, rng: np.random.Generator | None, training: bool = True) -> Tensor:
    """Inverted dropout: zero entries with probability ``rate``, rescale the rest."""
    x = as_tensor(x)
    if not training or rate <= 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs a seeded generator")
    keep = (rng.random(x.shape, dtype=np.float32) >= rate).astype(x.data.dtype)
    keep *= 1.0 / (1.0 - rate)
    return Tensor._from_op(x.data * keep, (x,), lambda g: (g * keep,), "dropout")


def conv2d(x, kernel: np.ndarray) -> Tensor:
    """Same-shape 2-d correlation of the last two axes with a fixed kernel.

    The window anchored at (s, t) covers rows s..s+kh-1 and columns t..t+kw-1;
    cells beyond the matrix edge count as zero.
    """
    x = as_tensor(x)
    kernel = np.asarray(kernel, dtype=x.data.dtype)
    kh, kw = kernel.shape
    h, w = x.shape[-2:]
    lead = [(0, 0)] * (x.ndim - 2)
    padded = np.pad(x.data, lead + [(0, kh - 1), (0, kw - 1)])
    out = np.zeros_like(x.data)
    for i in range(kh):
        for j in range(kw):
            if kernel[i, j] != 0:
                out += kernel[i, j] * padded[..., i:i + h, j:j + w]

    def backward(g):
        grad = np.zeros(padded.shape, dtype=g.dtype)
        for i in range(kh):
            for j in range(kw):
                if kernel[i, j] != 0:
                    grad[..., i:i + h, j:j + w] += kernel[i, j] * g
        return (grad[..., :h, :w],)

    return Tensor._from_op(out, (x,), backward, "conv2d")


def gather(x, idx: np.ndarray, axis: int) -> Tensor:
    """``np.take_along_axis`` with scatter-add gradient."""
    x = as_tensor(x)
    idx = np.asarray(idx)
    n = x.shape[axis]
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise IndexError(f"gather: index out of range for axis of size {n}")
    shape = x.shape

    def backward(g):
        grad = np.zeros(shape, dtype=g.dtype)
        full = list(np.indices(idx.shape, sparse=True))
        full[axis % len(shape)] = idx
        np.add.at(grad, tuple(full), g)
        return (grad,)

    return Tensor._from_op(np.take_along_axis(x.data, idx, axis=axis), (x,), backward, "gather")


def cross_entropy(logits, target_ids, mask: np.ndarray | None = None) -> Tensor:
    """Summed negative log-likelihood of ``target_ids`` under softmax(logits).

    ``logits`` has shape (..., vocab) and ``target_ids`` the leading shape.
    Positions where ``mask`` is false contribute nothing.
    """
    logits = as_tensor(logits)
    target_ids = np.asarray(target_ids)
    vocab = logits.shape[-1]
    if target_ids.shape != logits.shape[:-1]:
        raise DimensionError(
            f"cross_entropy: targets {target_ids.shape} do not match logits {logits.shape}")
    if target_ids.size and (target_ids.min() < 0 or target_ids.max() >= vocab):
        raise IndexError(f"cross_entropy: target id out of range for vocabulary of size {vocab}")
    _check_finite(logits.data, "cross_entropy")
    shifted = logits.data - logits.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    z = e.sum(axis=-1, keepdims=True)
    logp = np.take_along_axis(shifted, target_ids[..., None], axis=-1)[..., 0] - np.log(z[..., 0])
    weight = np.ones(target_ids.shape, dtype=logits.data.dtype) if mask is None \
        else np.asarray(mask, dtype=logits.data.dtype)
    loss = -(logp * weight).sum()

    def backward(g):
        probs = e / z
        np.put_along_axis(
            probs, target_ids[..., None],
            np.take_along_axis(probs, target_ids[..., None], axis=-1) - 1.0, axis=-1)
        return (probs * (weight * g)[..., None],)

    return Tensor._from_op(np.asarray(loss, dtype=logits.data.dtype), (logits,), backward,
                           "cross_entropy")
