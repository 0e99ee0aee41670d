"""Tape-based reverse-mode differentiation over float64 numpy arrays.

A :class:`Graph` records every operation applied to its variables in
execution order, so the tape is already topologically sorted.  Calling
:meth:`Graph.backward` on a scalar walks the tape in reverse and
accumulates adjoints, summing contributions when a value fans out to
several consumers.

Only the operators the forecasting network needs are provided.  Leading
dimensions are treated as batch dimensions; there is no general
broadcasting.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, ShapeError, WindowError

__all__ = [
    "Graph",
    "Var",
    "dense",
    "conv1d",
    "rnn_step",
    "rnn_layer",
    "activation",
    "concat",
    "take",
    "reshape",
    "total",
    "mse",
]

DTYPE = np.float64


def _frozen(value) -> np.ndarray:
    arr = np.array(value, dtype=DTYPE)
    arr.flags.writeable = False
    return arr


class Var:
    """Handle to a value recorded on a graph."""

    __slots__ = ("graph", "index")

    def __init__(self, graph: "Graph", index: int):
        self.graph = graph
        self.index = index

    @property
    def value(self) -> np.ndarray:
        return self.graph.nodes[self.index].value

    @property
    def shape(self) -> tuple:
        return self.value.shape

    def __repr__(self):
        node = self.graph.nodes[self.index]
        return f"Var({node.op}, shape={self.shape})"


class _Node:
    __slots__ = ("op", "inputs", "value", "backward", "name", "requires_grad")

    def __init__(self, op, inputs, value, backward, name, requires_grad):
        self.op = op
        self.inputs = inputs
        self.value = value
        self.backward = backward
        self.name = name
        self.requires_grad = requires_grad


class Graph:
    """Computation record: ordered nodes plus the named differentiable leaves."""

    def __init__(self):
        self.nodes: list[_Node] = []
        self.leaves: dict[str, int] = {}

    def leaf(self, value, name: str) -> Var:
        """Register a differentiable input (a parameter, or an input under attribution)."""
        if name in self.leaves:
            raise ValueError(f"duplicate leaf name {name!r}")
        var = self._push("leaf", (), _frozen(value), None, name=name, requires_grad=True)
        self.leaves[name] = var.index
        return var

    def constant(self, value) -> Var:
        return self._push("const", (), _frozen(value), None)

    def _push(self, op, inputs, value, backward, name=None, requires_grad=None) -> Var:
        if requires_grad is None:
            requires_grad = any(self.nodes[i].requires_grad for i in inputs)
        if value.flags.writeable:
            value.flags.writeable = False
        self.nodes.append(_Node(op, tuple(inputs), value, backward, name, requires_grad))
        return Var(self, len(self.nodes) - 1)

    def lift(self, x) -> Var:
        if isinstance(x, Var):
            if x.graph is not self:
                raise ValueError("variable belongs to a different graph")
            return x
        return self.constant(x)

    def backward(self, loss: Var) -> dict[str, np.ndarray]:
        """Gradients of a scalar ``loss`` with respect to every named leaf.

        Leaves the loss does not depend on get a zero gradient of their own shape.
        """
        if loss.graph is not self:
            raise ValueError("loss belongs to a different graph")
        if loss.value.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        adjoint: list = [None] * len(self.nodes)
        adjoint[loss.index] = np.ones_like(loss.value)
        for idx in range(loss.index, -1, -1):
            g = adjoint[idx]
            node = self.nodes[idx]
            if g is None or node.backward is None:
                continue
            parents = node.inputs
            grads = node.backward(g)
            for parent, pg in zip(parents, grads):
                if pg is None or not self.nodes[parent].requires_grad:
                    continue
                if adjoint[parent] is None:
                    adjoint[parent] = np.array(pg, dtype=DTYPE)
                else:
                    adjoint[parent] = adjoint[parent] + pg
        out = {}
        for name, idx in self.leaves.items():
            g = adjoint[idx]
            out[name] = np.zeros_like(self.nodes[idx].value) if g is None else g
        return out


def _graph_of(*args) -> Graph:
    for a in args:
        if isinstance(a, Var):
            return a.graph
    raise TypeError("at least one operand must be a graph variable")


def _record(op: str, args: Sequence, value: np.ndarray,
            backward: Callable[[np.ndarray], tuple]) -> Var:
    graph = _graph_of(*args)
    vars_ = [graph.lift(a) for a in args]
    return graph._push(op, [v.index for v in vars_], value, backward)


def _value(x) -> np.ndarray:
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=DTYPE)


def _flat2(a: np.ndarray) -> np.ndarray:
    return a.reshape(-1, a.shape[-1])


# ----------------------------------------------------------------------------
# operators


def dense(x, W, b) -> Var:
    """Affine map ``x @ W + b`` applied over the last axis."""
    xv, Wv, bv = _value(x), _value(W), _value(b)
    if Wv.ndim != 2 or xv.ndim < 1 or xv.shape[-1] != Wv.shape[0]:
        raise ShapeError(f"dense: input {xv.shape} incompatible with weight {Wv.shape}")
    if bv.shape != (Wv.shape[1],):
        raise ShapeError(f"dense: bias {bv.shape} incompatible with weight {Wv.shape}")
    out = xv @ Wv + bv

    def backward(g):
        g2 = _flat2(g)
        return g @ Wv.T, _flat2(xv).T @ g2, g2.sum(axis=0)

    return _record("dense", (x, W, b), out, backward)


def _im2col(xpad: np.ndarray, width: int, out_len: int) -> np.ndarray:
    cols = np.stack([xpad[..., i:i + out_len, :] for i in range(width)], axis=-2)
    return cols.reshape(cols.shape[:-2] + (-1,))


def conv1d(x, K, b, padding: str = "same") -> Var:
    """Cross-correlation along the time axis.

    ``x`` is ``[..., time, C_in]``, ``K`` is ``[width, C_in, C_out]``.  With
    ``same`` padding the kernel width must be odd and the input is zero-padded
    by ``(width - 1) / 2`` on each side so the time length is preserved.
    """
    xv, Kv, bv = _value(x), _value(K), _value(b)
    if Kv.ndim != 3 or xv.ndim < 2 or xv.shape[-1] != Kv.shape[1]:
        raise ShapeError(f"conv1d: input {xv.shape} incompatible with kernel {Kv.shape}")
    if bv.shape != (Kv.shape[2],):
        raise ShapeError(f"conv1d: bias {bv.shape} incompatible with kernel {Kv.shape}")
    width, c_in, c_out = Kv.shape
    steps = xv.shape[-2]
    if width > steps:
        raise WindowError(f"conv1d: kernel width {width} exceeds input length {steps}")
    if padding == "same":
        if width % 2 == 0:
            raise ConfigError(f"conv1d: same padding needs an odd kernel width, got {width}")
        pad = (width - 1) // 2
    elif padding == "valid":
        pad = 0
    else:
        raise ConfigError(f"conv1d: unknown padding {padding!r}")
    pad_spec = [(0, 0)] * (xv.ndim - 2) + [(pad, pad), (0, 0)]
    xpad = np.pad(xv, pad_spec) if pad else xv
    out_len = xpad.shape[-2] - width + 1
    cols = _im2col(xpad, width, out_len)
    Kr = Kv.reshape(width * c_in, c_out)
    out = cols @ Kr + bv

    def backward(g):
        g2 = _flat2(g)
        dK = (_flat2(cols).T @ g2).reshape(Kv.shape)
        dcols = (g @ Kr.T).reshape(g.shape[:-1] + (width, c_in))
        dxpad = np.zeros_like(xpad)
        for i in range(width):
            dxpad[..., i:i + out_len, :] += dcols[..., i, :]
        dx = dxpad[..., pad:pad + steps, :] if pad else dxpad
        return dx, dK, g2.sum(axis=0)

    return _record("conv1d", (x, K, b), out, backward)


def _check_rnn(op, h_shape, v_shape, U, W, b):
    units = U.shape[0]
    if U.shape != (units, units) or W.ndim != 2 or W.shape[1] != units or b.shape != (units,):
        raise ShapeError(f"{op}: weights U{U.shape}, W{W.shape}, b{b.shape} disagree")
    if v_shape[-1] != W.shape[0]:
        raise ShapeError(f"{op}: input {v_shape} incompatible with W {W.shape}")
    if h_shape is not None and h_shape[-1] != units:
        raise ShapeError(f"{op}: state {h_shape} incompatible with U {U.shape}")


def rnn_step(h_prev, v, U, W, b) -> Var:
    """One Elman step: ``tanh(b + h_prev @ U + v @ W)``."""
    hv, vv, Uv, Wv, bv = (_value(a) for a in (h_prev, v, U, W, b))
    _check_rnn("rnn_step", hv.shape, vv.shape, Uv, Wv, bv)
    if hv.shape[:-1] != vv.shape[:-1]:
        raise ShapeError(f"rnn_step: state {hv.shape} and input {vv.shape} batch dims differ")
    h = np.tanh(bv + hv @ Uv + vv @ Wv)

    def backward(g):
        ga = g * (1.0 - h * h)
        ga2 = _flat2(ga)
        return (ga @ Uv.T, ga @ Wv.T, _flat2(hv).T @ ga2, _flat2(vv).T @ ga2,
                ga2.sum(axis=0))

    return _record("rnn_step", (h_prev, v, U, W, b), h, backward)


def rnn_layer(x, U, W, b) -> Var:
    """Run :func:`rnn_step` over every time step of ``x`` (``[..., time, d]``).

    The initial state is zero and the whole hidden sequence ``[..., time, units]``
    is returned.  The backward pass is full backpropagation through time.
    """
    xv, Uv, Wv, bv = (_value(a) for a in (x, U, W, b))
    if xv.ndim < 2:
        raise ShapeError(f"rnn_layer: input needs a time axis, got {xv.shape}")
    _check_rnn("rnn_layer", None, xv.shape, Uv, Wv, bv)
    steps = xv.shape[-2]
    # time-major copies keep the per-step slices contiguous
    xw = np.ascontiguousarray(np.moveaxis(xv @ Wv + bv, -2, 0))
    hs_t = np.empty_like(xw)
    h = np.zeros_like(xw[0])
    for j in range(steps):
        h = np.tanh(xw[j] + h @ Uv)
        hs_t[j] = h
    hs = np.moveaxis(hs_t, 0, -2)

    def backward(g):
        g_t = np.moveaxis(g, -2, 0)
        ga_t = np.empty_like(hs_t)
        carry = np.zeros_like(hs_t[0])
        UT = Uv.T
        for j in range(steps - 1, -1, -1):
            hj = hs_t[j]
            a = (g_t[j] + carry) * (1.0 - hj * hj)
            ga_t[j] = a
            carry = a @ UT
        ga2 = ga_t.reshape(-1, ga_t.shape[-1])
        dU = hs_t[:-1].reshape(-1, hs_t.shape[-1]).T @ ga_t[1:].reshape(-1, ga_t.shape[-1])
        dW = np.moveaxis(xv, -2, 0).reshape(-1, xv.shape[-1]).T @ ga2
        ga = np.moveaxis(ga_t, 0, -2)
        return ga @ Wv.T, dU, dW, ga2.sum(axis=0)

    return _record("rnn_layer", (x, U, W, b), hs, backward)


def activation(x, kind: str) -> Var:
    xv = _value(x)
    if kind == "tanh":
        out = np.tanh(xv)

        def backward(g):
            return (g * (1.0 - out * out),)
    elif kind == "relu":
        out = np.maximum(xv, 0.0)

        def backward(g):
            return (g * (xv > 0),)
    elif kind == "identity":
        out = xv.copy()

        def backward(g):
            return (g,)
    else:
        raise ConfigError(f"unknown activation {kind!r}")
    return _record(kind, (x,), out, backward)


def concat(xs: Sequence, axis: int = -1) -> Var:
    if len(xs) == 0:
        raise ShapeError("concat: empty operand list")
    vals = [_value(a) for a in xs]
    ndim = vals[0].ndim
    ax = axis % ndim if ndim else 0
    for v in vals[1:]:
        if v.ndim != ndim or v.shape[:ax] + v.shape[ax + 1:] != vals[0].shape[:ax] + vals[0].shape[ax + 1:]:
            raise ShapeError(f"concat: shapes {vals[0].shape} and {v.shape} differ off axis {axis}")
    out = np.concatenate(vals, axis=ax)
    bounds = np.cumsum([0] + [v.shape[ax] for v in vals])

    def backward(g):
        index = [slice(None)] * ndim
        parts = []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            index[ax] = slice(lo, hi)
            parts.append(g[tuple(index)])
        return tuple(parts)

    return _record("concat", tuple(xs), out, backward)


def take(x, start: int, stop: int, axis: int = -1) -> Var:
    """Contiguous slice ``[start, stop)`` along ``axis``."""
    xv = _value(x)
    ax = axis % xv.ndim
    if not 0 <= start < stop <= xv.shape[ax]:
        raise ShapeError(f"take: range [{start}, {stop}) outside axis of length {xv.shape[ax]}")
    index = [slice(None)] * xv.ndim
    index[ax] = slice(start, stop)
    index = tuple(index)
    out = xv[index].copy()

    def backward(g):
        full = np.zeros_like(xv)
        full[index] = g
        return (full,)

    return _record("take", (x,), out, backward)


def reshape(x, shape) -> Var:
    xv = _value(x)
    try:
        out = xv.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"reshape: cannot view {xv.shape} as {tuple(shape)}") from exc

    def backward(g):
        return (g.reshape(xv.shape),)

    return _record("reshape", (x,), out.copy(), backward)


def total(x, weights=None) -> Var:
    """Scalar ``sum(x * weights)``; plain sum when ``weights`` is None."""
    xv = _value(x)
    if weights is None:
        wv = np.ones_like(xv)
    else:
        wv = np.asarray(weights, dtype=DTYPE)
        if wv.shape != xv.shape:
            raise ShapeError(f"total: weights {wv.shape} do not match input {xv.shape}")
    out = np.array(np.sum(xv * wv))

    def backward(g):
        return (g * wv,)

    return _record("total", (x,), out, backward)


def mse(pred, truth) -> Var:
    """Mean of squared differences over every element (batch included)."""
    pv, tv = _value(pred), _value(truth)
    if pv.shape != tv.shape:
        raise ShapeError(f"mse: prediction {pv.shape} and truth {tv.shape} differ")
    diff = pv - tv
    n = diff.size
    out = np.array(np.mean(diff * diff))

    def backward(g):
        d = (2.0 / n) * g * diff
        return d, -d

    return _record("mse", (pred, truth), out, backward)
