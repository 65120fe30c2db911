"""Dense float64 tensors with tape-based reverse-mode differentiation.

The engine covers exactly the operations the attention networks need: affine
maps, elementwise nonlinearities, row gathers/scatters, segment reductions and
normalization. Forward values are plain numpy arrays; recording happens only
inside an active ``Tape`` and only for results that depend on a tensor with
``requires_grad`` set. ``Tape.backward`` walks the recorded nodes once, in
reverse creation order, which is a valid topological order of the DAG.

Set MOLGROW_DEBUG_NAN=1 to raise on any non-finite intermediate.
"""

from __future__ import annotations

import os
from typing import Callable, Sequence

import numpy as np

from .. import _kernels
from ..errors import NonFiniteError, ShapeError

DTYPE = np.float64
_DEBUG_NAN = os.environ.get("MOLGROW_DEBUG_NAN", "") not in ("", "0")

LEAKY_SLOPE = 0.01
LAYER_NORM_EPS = 1e-6


class Tensor:
    """A numpy array plus gradient bookkeeping."""

    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        self.data = np.asarray(data, dtype=DTYPE)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}{tag}, requires_grad={self.requires_grad})"

    # arithmetic sugar; floats and arrays are wrapped as constant tensors
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __truediv__(self, other):
        return div(self, _as_tensor(other))

    def __matmul__(self, other):
        return matmul(self, _as_tensor(other))

    def __neg__(self):
        return neg(self)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class _Node:
    __slots__ = ("out", "parents", "backward")

    def __init__(self, out: Tensor, parents: tuple[Tensor, ...], backward: Callable):
        self.out = out
        self.parents = parents
        self.backward = backward


_TAPE_STACK: list["Tape"] = []


class Tape:
    """Records operations for one forward pass; replays them for gradients.

    Nodes are stored in creation order; the backward sweep visits them in
    reverse, so every node is processed exactly once even when its output
    feeds several consumers (their contributions have already been summed
    into ``out.grad`` by the time the node is reached).
    """

    def __init__(self):
        self.nodes: list[_Node] = []
        self._used = False

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc) -> None:
        popped = _TAPE_STACK.pop()
        assert popped is self

    def backward(self, loss: Tensor) -> None:
        if self._used:
            raise RuntimeError("tape already consumed; build a fresh graph")
        self._used = True
        loss.grad = np.ones_like(loss.data)
        for node in reversed(self.nodes):
            if node.out.grad is None:
                continue
            grads = node.backward(node.out.grad)
            for parent, g in zip(node.parents, grads):
                if g is None or not parent.requires_grad:
                    continue
                # accumulation always builds a fresh array, so aliasing g is safe
                parent.grad = g if parent.grad is None else parent.grad + g


def _active_tape() -> Tape | None:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward: Callable, op: str) -> Tensor:
    if _DEBUG_NAN and not np.all(np.isfinite(data)):
        raise NonFiniteError(f"non-finite values produced by {op}")
    out = Tensor(data)
    tape = _active_tape()
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        tape.nodes.append(_Node(out, parents, backward))
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcast gradient back to the parent's shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------- primitives


def add(a: Tensor, b: Tensor) -> Tensor:
    data = a.data + b.data
    return _make(data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    data = a.data - b.data
    return _make(data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)), "sub")


def neg(a: Tensor) -> Tensor:
    return _make(-a.data, (a,), lambda g: (-g,), "neg")


def mul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data * b.data

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make(data, (a, b), backward, "mul")


def div(a: Tensor, b: Tensor) -> Tensor:
    data = a.data / b.data

    def backward(g):
        ga = _unbroadcast(g / b.data, a.shape)
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape)
        return ga, gb

    return _make(data, (a, b), backward, "div")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-d operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    data = a.data @ b.data

    def backward(g):
        return g @ b.data.T, a.data.T @ g

    return _make(data, (a, b), backward, "matmul")


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = list(parts)
    data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        return tuple(
            np.take(g, range(offsets[i], offsets[i + 1]), axis=axis) for i in range(len(parts))
        )

    return _make(data, tuple(parts), backward, "concat")


def gather_rows(x: Tensor, idx: np.ndarray) -> Tensor:
    idx = np.asarray(idx, dtype=np.int64)
    data = x.data[idx]

    def backward(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, idx, g)
        return (gx,)

    return _make(data, (x,), backward, "gather_rows")


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    data = x.data.reshape(shape)

    def backward(g):
        return (g.reshape(x.data.shape),)

    return _make(data, (x,), backward, "reshape")


def tsum(x: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    data = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, x.shape).astype(DTYPE, copy=True),)
        g2 = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(g2, x.shape).astype(DTYPE, copy=True),)

    return _make(data, (x,), backward, "sum")


def tmean(x: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    count = x.data.size if axis is None else x.shape[axis]
    return mul(tsum(x, axis=axis, keepdims=keepdims), Tensor(1.0 / count))


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * data).sum(axis=axis, keepdims=True)
        return (data * (g - dot),)

    return _make(data, (x,), backward, "softmax")


def relu(x: Tensor) -> Tensor:
    data = np.maximum(x.data, 0.0)
    return _make(data, (x,), lambda g: (g * (x.data > 0.0),), "relu")


def leaky_relu(x: Tensor, slope: float = LEAKY_SLOPE) -> Tensor:
    data = np.where(x.data > 0.0, x.data, slope * x.data)
    return _make(data, (x,), lambda g: (g * np.where(x.data > 0.0, 1.0, slope),), "leaky_relu")


def elu(x: Tensor) -> Tensor:
    data = np.where(x.data > 0.0, x.data, np.expm1(x.data))
    return _make(data, (x,), lambda g: (g * np.where(x.data > 0.0, 1.0, data + 1.0),), "elu")


def sigmoid(x: Tensor) -> Tensor:
    data = 1.0 / (1.0 + np.exp(-np.abs(x.data)))
    data = np.where(x.data >= 0.0, data, 1.0 - data)
    return _make(data, (x,), lambda g: (g * data * (1.0 - data),), "sigmoid")


def softplus(x: Tensor) -> Tensor:
    # log(1 + e^x) computed around max(x, 0) for stability
    data = np.maximum(x.data, 0.0) + np.log1p(np.exp(-np.abs(x.data)))

    def backward(g):
        s = 1.0 / (1.0 + np.exp(-np.abs(x.data)))
        s = np.where(x.data >= 0.0, s, 1.0 - s)
        return (g * s,)

    return _make(data, (x,), backward, "softplus")


def tanh(x: Tensor) -> Tensor:
    data = np.tanh(x.data)
    return _make(data, (x,), lambda g: (g * (1.0 - data * data),), "tanh")


def tlog(x: Tensor) -> Tensor:
    data = np.log(x.data)
    return _make(data, (x,), lambda g: (g / x.data,), "log")


def layer_norm(x: Tensor, eps: float = LAYER_NORM_EPS) -> Tensor:
    """Normalize each row of the last axis to zero mean and unit variance.

    The variance is floored at ``eps`` so constant rows map to zeros; on the
    floored branch the scale is treated as a constant by the backward pass.
    """
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    floored = var < eps
    inv = 1.0 / np.sqrt(np.where(floored, eps, var))
    data = centered * inv
    n = x.shape[-1]

    def backward(g):
        g_mean = g.mean(axis=-1, keepdims=True)
        gy_mean = (g * data).mean(axis=-1, keepdims=True)
        full = inv * (g - g_mean - data * gy_mean)
        flat = inv * (g - g_mean)
        return (np.where(floored, flat, full),)

    return _make(data, (x,), backward, "layer_norm")


def segment_sum(x: Tensor, seg: np.ndarray, n_seg: int) -> Tensor:
    seg = np.asarray(seg, dtype=np.int64)
    data = _kernels.segment_sum(x.data, seg, n_seg)
    return _make(data, (x,), lambda g: (g[seg],), "segment_sum")


def segment_softmax(z: Tensor, seg: np.ndarray, n_seg: int) -> Tensor:
    """Softmax over the entries of each segment of a 1-d score vector."""
    if z.ndim != 1:
        raise ShapeError(f"segment_softmax expects a 1-d tensor, got {z.shape}")
    seg = np.asarray(seg, dtype=np.int64)
    shift = _kernels.segment_max(z.data, seg, n_seg)[seg]
    e = np.exp(z.data - shift)
    denom = _kernels.segment_sum(e, seg, n_seg)[seg]
    data = e / denom

    def backward(g):
        dot = _kernels.segment_sum(g * data, seg, n_seg)[seg]
        return (data * (g - dot),)

    return _make(data, (z,), backward, "segment_softmax")


# --------------------------------------------------------------- composites


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    out = matmul(x, weight)
    return out if bias is None else add(out, bias)


def rows_dot(a: Tensor, b: Tensor) -> Tensor:
    """Row-wise inner products of two equally shaped 2-d tensors -> 1-d."""
    return tsum(mul(a, b), axis=1)


def gru_cell(h: Tensor, x_prev: Tensor, p: dict[str, Tensor], prefix: str) -> Tensor:
    """Gated update combining a candidate signal with the previous state.

    Uses three gates, each fed by separate affine maps of the incoming signal
    and the previous state: a reset gate on the state contribution to the
    candidate, and a keep gate blending candidate with previous state.
    """

    def lin(name: str, v: Tensor) -> Tensor:
        return linear(v, p[f"{prefix}.{name}.w"], p[f"{prefix}.{name}.b"])

    reset = sigmoid(add(lin("rh", h), lin("rx", x_prev)))
    keep = sigmoid(add(lin("sh", h), lin("sx", x_prev)))
    cand = tanh(add(lin("th", h), mul(reset, lin("tx", x_prev))))
    one = Tensor(1.0)
    return add(mul(sub(one, keep), cand), mul(keep, x_prev))


def bce_with_logits(
    logits: Tensor, targets: np.ndarray, weights: np.ndarray | None = None
) -> Tensor:
    """Mean binary cross-entropy between sigmoid(logits) and 0/1 targets.

    Computed from the logits directly (softplus form) for stability. With
    ``weights`` the mean is weighted; contrastive batches use that to give
    each example's positive and its negatives equal aggregate weight, so
    the optimal odds equal the density ratio for any negative count.
    """
    t = np.asarray(targets, dtype=DTYPE)
    # loss_i = softplus(z_i) - t_i * z_i
    per = sub(softplus(logits), mul(Tensor(t), logits))
    if weights is None:
        return tmean(per)
    w = np.asarray(weights, dtype=DTYPE)
    return mul(tsum(mul(per, Tensor(w))), Tensor(1.0 / w.sum()))


def init_glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def parameter(rng: np.random.Generator, fan_in: int, fan_out: int, name: str = "") -> Tensor:
    return Tensor(init_glorot(rng, fan_in, fan_out), requires_grad=True, name=name)


def bias(fan_out: int, name: str = "") -> Tensor:
    return Tensor(np.zeros(fan_out), requires_grad=True, name=name)
