"""Minimal reverse-mode gradient tape over numpy arrays.

Only the operations the segmentation network and its training loss need:
convolution, ReLU/sigmoid, channel concat/slice, pixel gather, elementwise
arithmetic with broadcasting, sqrt, elementwise min/max against constants,
and full reduction. Graphs are built define-by-run; ``backward`` walks the
tape once and accumulates ``grad`` on every leaf that requires it.

Tie conventions (they matter for exactness tests): ``relu`` uses subgradient
0 at 0; ``minimum``/``maximum`` against a constant route the gradient to the
variable side on ties, which makes the relaxed-IOU loss gradient vanish
identically when prediction equals target.
"""

from __future__ import annotations

import numpy as np

from . import convops


class Var:
    """A node in the gradient tape."""

    __slots__ = ("value", "grad", "parents", "backward_fn", "requires_grad")

    def __init__(self, value, parents=(), backward_fn=None, requires_grad=True):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.parents = parents
        self.backward_fn = backward_fn
        self.requires_grad = requires_grad

    def __repr__(self):
        return f"Var(shape={self.value.shape}, requires_grad={self.requires_grad})"

    # -- operator sugar -------------------------------------------------
    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __truediv__(self, other):
        return div(self, _wrap(other))

    def __rtruediv__(self, other):
        return div(_wrap(other), self)

    def __neg__(self):
        return mul(self, constant(-1.0))

    def item(self) -> float:
        return float(self.value)


def constant(value) -> Var:
    return Var(value, requires_grad=False)


def param(value) -> Var:
    return Var(value, requires_grad=True)


def _wrap(x) -> Var:
    return x if isinstance(x, Var) else constant(x)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Reduce a broadcast gradient back to ``shape``."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g.reshape(shape)


def _node(value, parents, backward_fn) -> Var:
    if any(p.requires_grad for p in parents):
        return Var(value, parents, backward_fn)
    return constant(value)


# -- arithmetic ----------------------------------------------------------

def add(a: Var, b: Var) -> Var:
    def bw(g):
        return (_unbroadcast(g, a.value.shape), _unbroadcast(g, b.value.shape))

    return _node(a.value + b.value, (a, b), bw)


def sub(a: Var, b: Var) -> Var:
    def bw(g):
        return (_unbroadcast(g, a.value.shape), _unbroadcast(-g, b.value.shape))

    return _node(a.value - b.value, (a, b), bw)


def mul(a: Var, b: Var) -> Var:
    def bw(g):
        return (
            _unbroadcast(g * b.value, a.value.shape),
            _unbroadcast(g * a.value, b.value.shape),
        )

    return _node(a.value * b.value, (a, b), bw)


def div(a: Var, b: Var) -> Var:
    out_val = a.value / b.value

    # d(a/b)/db written as -out/b so that the two sides of a saturated
    # quotient (a == b) cancel exactly in the backward pass.
    def bw(g):
        return (
            _unbroadcast(g / b.value, a.value.shape),
            _unbroadcast(-g * out_val / b.value, b.value.shape),
        )

    return _node(out_val, (a, b), bw)


def sqrt(a: Var) -> Var:
    out_val = np.sqrt(a.value)

    def bw(g):
        return (g * 0.5 / out_val,)

    return _node(out_val, (a,), bw)


def sum_all(a: Var) -> Var:
    def bw(g):
        return (np.full_like(a.value, float(g)),)

    return _node(a.value.sum(), (a,), bw)


def minimum(a: Var, const) -> Var:
    c = np.asarray(const, dtype=np.float64)
    mask = a.value <= c  # ties route to the variable

    def bw(g):
        return (g * mask,)

    return _node(np.minimum(a.value, c), (a,), bw)


def maximum(a: Var, const) -> Var:
    c = np.asarray(const, dtype=np.float64)
    mask = a.value >= c

    def bw(g):
        return (g * mask,)

    return _node(np.maximum(a.value, c), (a,), bw)


# -- nonlinearities ------------------------------------------------------

def relu(a: Var) -> Var:
    mask = a.value > 0

    def bw(g):
        return (g * mask,)

    return _node(a.value * mask, (a,), bw)


def sigmoid(a: Var) -> Var:
    out_val = convops.sigmoid(a.value)

    def bw(g):
        return (g * out_val * (1.0 - out_val),)

    return _node(out_val, (a,), bw)


# -- structure -----------------------------------------------------------

def concat0(parts) -> Var:
    parts = list(parts)
    sizes = [p.value.shape[0] for p in parts]

    def bw(g):
        grads = []
        off = 0
        for s in sizes:
            grads.append(g[off : off + s])
            off += s
        return tuple(grads)

    return _node(np.concatenate([p.value for p in parts], axis=0), tuple(parts), bw)


def channel(a: Var, idx: int) -> Var:
    def bw(g):
        out = np.zeros_like(a.value)
        out[idx] = g
        return (out,)

    return _node(a.value[idx], (a,), bw)


def gather_pixels(a: Var, xs: np.ndarray, ys: np.ndarray) -> Var:
    """Gather a 1-D vector of values from a (w, h) map at integer pixels."""
    xs = np.asarray(xs, dtype=np.int64)
    ys = np.asarray(ys, dtype=np.int64)

    def bw(g):
        out = np.zeros_like(a.value)
        np.add.at(out, (xs, ys), g)
        return (out,)

    return _node(a.value[xs, ys], (a,), bw)


def conv2d(x: Var, weight: Var, bias: Var, dilation: int = 1, pad: int = 0) -> Var:
    out_val, cols = convops.conv2d_with_cols(x.value, weight.value, bias.value, dilation, pad)

    def bw(g):
        gx, gw, gb = convops.conv2d_backward(x.value, weight.value, g, dilation, pad, cols=cols)
        return (gx, gw, gb)

    return _node(out_val, (x, weight, bias), bw)


# -- backward pass -------------------------------------------------------

def backward(root: Var) -> None:
    """Accumulate gradients of the scalar ``root`` into every reachable Var."""
    if root.value.ndim != 0:
        raise ValueError("backward expects a scalar root")
    topo = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))
    root.grad = np.ones_like(root.value)
    for node in reversed(topo):
        if node.backward_fn is None or node.grad is None:
            continue
        grads = node.backward_fn(node.grad)
        for p, g in zip(node.parents, grads):
            if g is None or not p.requires_grad:
                continue
            if p.grad is None:
                p.grad = np.zeros_like(p.value)
            p.grad = p.grad + g
