"""Differentiable dense operations on float64 tensors."""

from __future__ import annotations

import math
from collections.abc import Sequence

import numpy as np

from personapkt.exceptions import NumericError, ShapeError

from .tensor import BackwardFn, FloatArray, Node, Tensor, active_graph

LAYER_NORM_EPS = 1e-5
_GELU_C = math.sqrt(2.0 / math.pi)


def _result(data: FloatArray, op: str, parents: tuple[Tensor, ...], fn: BackwardFn) -> Tensor:
    if not np.isfinite(data).all():
        raise NumericError(f"non-finite result in {op}")
    out = Tensor(data)
    graph = active_graph()
    if graph is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        graph.record(Node(op=op, output=out, parents=parents, backward=fn))
    return out


def _unbroadcast(grad: FloatArray, shape: tuple[int, ...]) -> FloatArray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> tuple[int, ...]:
    try:
        return tuple(np.broadcast_shapes(a.shape, b.shape))
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """
    Matrix product over the last two axes.

    ``b`` is either 2-D (shared across the leading axes of ``a``) or has exactly the
    leading axes of ``a``.
    """
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError(f"matmul needs at least 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2] or (b.data.ndim > 2 and a.shape[:-2] != b.shape[:-2]):
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    a_data, b_data = a.data, b.data

    def grad_fn(g: FloatArray) -> tuple[FloatArray, FloatArray]:
        ga = g @ np.swapaxes(b_data, -1, -2)
        gb = np.swapaxes(a_data, -1, -2) @ g
        return ga, _unbroadcast(gb, b_data.shape)

    return _result(a_data @ b_data, "matmul", (a, b), grad_fn)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum with numpy broadcasting."""
    _broadcast_shape("add", a, b)
    a_shape, b_shape = a.data.shape, b.data.shape

    def grad_fn(g: FloatArray) -> tuple[FloatArray, FloatArray]:
        return _unbroadcast(g, a_shape), _unbroadcast(g, b_shape)

    return _result(a.data + b.data, "add", (a, b), grad_fn)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product with numpy broadcasting."""
    _broadcast_shape("mul", a, b)
    a_data, b_data = a.data, b.data

    def grad_fn(g: FloatArray) -> tuple[FloatArray, FloatArray]:
        return _unbroadcast(g * b_data, a_data.shape), _unbroadcast(g * a_data, b_data.shape)

    return _result(a_data * b_data, "mul", (a, b), grad_fn)


def scale(a: Tensor, factor: float) -> Tensor:
    """Multiply by a constant."""

    def grad_fn(g: FloatArray) -> tuple[FloatArray]:
        return (g * factor,)

    return _result(a.data * factor, "scale", (a,), grad_fn)


def add_n(tensors: Sequence[Tensor]) -> Tensor:
    """Sum equally shaped tensors."""
    if not tensors:
        raise ShapeError("add_n needs at least one operand")
    shape = tensors[0].shape
    for t in tensors[1:]:
        if t.shape != shape:
            raise ShapeError(f"add_n: incompatible shapes {shape} and {t.shape}")
    total = tensors[0].data.copy()
    for t in tensors[1:]:
        total = total + t.data

    def grad_fn(g: FloatArray) -> list[FloatArray]:
        return [g for _ in tensors]

    return _result(total, "add_n", tuple(tensors), grad_fn)


def mean(tensors: Sequence[Tensor]) -> Tensor:
    """Arithmetic mean of equally shaped tensors."""
    return scale(add_n(tensors), 1.0 / len(tensors))


def tanh(a: Tensor) -> Tensor:
    """Hyperbolic tangent."""
    y = np.tanh(a.data)

    def grad_fn(g: FloatArray) -> tuple[FloatArray]:
        return (g * (1.0 - y * y),)

    return _result(y, "tanh", (a,), grad_fn)


def gelu(a: Tensor) -> Tensor:
    """GELU, tanh approximation."""
    x = a.data
    inner = _GELU_C * (x + 0.044715 * x**3)
    t = np.tanh(inner)
    y = 0.5 * x * (1.0 + t)

    def grad_fn(g: FloatArray) -> tuple[FloatArray]:
        d_inner = _GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner),)

    return _result(y, "gelu", (a,), grad_fn)


def softmax(a: Tensor) -> Tensor:
    """Softmax over the last axis, computed with max subtraction."""
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def grad_fn(g: FloatArray) -> tuple[FloatArray]:
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _result(y, "softmax", (a,), grad_fn)


def log_softmax(a: Tensor) -> Tensor:
    """Log-softmax over the last axis."""
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    y = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))

    def grad_fn(g: FloatArray) -> tuple[FloatArray]:
        return (g - np.exp(y) * g.sum(axis=-1, keepdims=True),)

    return _result(y, "log_softmax", (a,), grad_fn)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = LAYER_NORM_EPS) -> Tensor:
    """Normalize the last axis to zero mean and unit variance, then apply ``gamma``/``beta``."""
    width = x.shape[-1]
    if gamma.shape != (width,) or beta.shape != (width,):
        raise ShapeError(
            f"layer_norm: affine shapes {gamma.shape}/{beta.shape} do not match input {x.shape}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    y = xhat * gamma.data + beta.data
    gamma_data = gamma.data

    def grad_fn(g: FloatArray) -> tuple[FloatArray, FloatArray, FloatArray]:
        gxhat = g * gamma_data
        gx = (inv / width) * (
            width * gxhat
            - gxhat.sum(axis=-1, keepdims=True)
            - xhat * (gxhat * xhat).sum(axis=-1, keepdims=True)
        )
        lead = tuple(range(g.ndim - 1))
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return _result(y, "layer_norm", (x, gamma, beta), grad_fn)


def embedding(table: Tensor, ids: Sequence[int]) -> Tensor:
    """Gather rows of ``table``."""
    index = np.asarray(ids, dtype=np.int64)
    rows = table.shape[0]
    if index.size and (index.min() < 0 or index.max() >= rows):
        raise ShapeError(f"embedding: ids out of range for table of shape {table.shape}")
    table_shape = table.data.shape

    def grad_fn(g: FloatArray) -> tuple[FloatArray]:
        out = np.zeros(table_shape)
        np.add.at(out, index, g)
        return (out,)

    return _result(table.data[index], "embedding", (table,), grad_fn)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    """Concatenate along ``axis``."""
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        shapes = ", ".join(str(t.shape) for t in tensors)
        raise ShapeError(f"concat: incompatible shapes {shapes} on axis {axis}") from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def grad_fn(g: FloatArray) -> list[FloatArray]:
        return list(np.split(g, bounds, axis=axis))

    return _result(data, "concat", tuple(tensors), grad_fn)


def index(a: Tensor, key: int | slice | tuple[int | slice, ...]) -> Tensor:
    """Basic (non-fancy) indexing."""
    data = np.array(a.data[key])
    a_shape = a.data.shape

    def grad_fn(g: FloatArray) -> tuple[FloatArray]:
        out = np.zeros(a_shape)
        out[key] = g
        return (out,)

    return _result(data, "index", (a,), grad_fn)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    """Row-major reshape."""
    try:
        data = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {a.shape} as {shape}") from None
    a_shape = a.data.shape

    def grad_fn(g: FloatArray) -> tuple[FloatArray]:
        return (g.reshape(a_shape),)

    return _result(data, "reshape", (a,), grad_fn)


def transpose(a: Tensor, axes: tuple[int, ...]) -> Tensor:
    """Permute axes."""
    if sorted(axes) != list(range(a.data.ndim)):
        raise ShapeError(f"transpose: axes {axes} invalid for shape {a.shape}")
    inverse = tuple(int(i) for i in np.argsort(axes))

    def grad_fn(g: FloatArray) -> tuple[FloatArray]:
        return (np.transpose(g, inverse),)

    return _result(np.transpose(a.data, axes), "transpose", (a,), grad_fn)


def total(a: Tensor) -> Tensor:
    """Sum of all elements as a scalar tensor."""
    a_shape = a.data.shape

    def grad_fn(g: FloatArray) -> tuple[FloatArray]:
        return (np.broadcast_to(g, a_shape).copy(),)

    return _result(np.asarray(a.data.sum()), "total", (a,), grad_fn)


def cross_entropy(logits: Tensor, targets: Sequence[int], positions: Sequence[int]) -> Tensor:
    """
    Mean negative log-likelihood of ``targets`` under rows ``positions`` of ``logits``.

    ``logits`` has shape (T, V); the i-th target is scored against row ``positions[i]``.
    """
    if len(targets) != len(positions):
        raise ShapeError(f"cross_entropy: {len(targets)} targets for {len(positions)} positions")
    if not targets:
        raise ShapeError("cross_entropy needs at least one target")
    rows = np.asarray(positions, dtype=np.int64)
    cols = np.asarray(targets, dtype=np.int64)
    picked = logits.data[rows]
    shifted = picked - picked.max(axis=-1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    count = len(targets)
    loss = -log_probs[np.arange(count), cols].sum() / count
    logits_shape = logits.data.shape

    def grad_fn(g: FloatArray) -> tuple[FloatArray]:
        local = np.exp(log_probs)
        local[np.arange(count), cols] -= 1.0
        out = np.zeros(logits_shape)
        np.add.at(out, rows, local * (float(g) / count))
        return (out,)

    return _result(np.asarray(loss), "cross_entropy", (logits,), grad_fn)
