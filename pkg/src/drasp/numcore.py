"""Minimal reverse-mode autodiff over float64 numpy arrays.

A ``Node`` wraps a value and, when it depends on something that requires a
gradient, the closure that maps its upstream gradient onto its inputs.
Broadcasting is restricted to scalar x tensor and row-wise (T, d) + (d,).
"""
from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

SQRT_EPS = 1e-9

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Build values only; no graph is recorded inside the block."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Node:
    __slots__ = ("value", "grad", "parents", "backward_fn", "requires_grad", "name")

    def __init__(self, value, parents=(), backward_fn=None, requires_grad=False, name=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.parents = parents
        self.backward_fn = backward_fn
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Node(shape={self.value.shape}{tag})"

    def zero_grad(self):
        self.grad = None

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    @property
    def T(self):
        return transpose(self)


class Parameter(Node):
    """Named trainable leaf."""

    __slots__ = ()

    def __init__(self, name: str, value):
        super().__init__(np.array(value, dtype=np.float64), requires_grad=True, name=name)


def constant(value) -> Node:
    return Node(value)


def as_node(x) -> Node:
    return x if isinstance(x, Node) else Node(x)


def _make(value, parents: Sequence[Node], backward_fn) -> Node:
    if _grad_enabled and any(p.requires_grad for p in parents):
        return Node(value, tuple(parents), backward_fn, requires_grad=True)
    return Node(value)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    if shape == ():
        return np.asarray(g.sum())
    if len(shape) == 1 and g.ndim == 2 and g.shape[1] == shape[0]:
        return g.sum(axis=0)
    raise ValueError(f"cannot reduce gradient of shape {g.shape} to {shape}")


def _check_broadcast(a: tuple, b: tuple, op: str):
    if a == b or a == () or b == ():
        return
    if len(a) == 2 and len(b) == 1 and a[1] == b[0]:
        return
    if len(b) == 2 and len(a) == 1 and b[1] == a[0]:
        return
    raise ValueError(f"{op}: unsupported shapes {a} and {b}")


# elementwise arithmetic

def add(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    _check_broadcast(a.shape, b.shape, "add")
    sa, sb = a.shape, b.shape

    def backward(g):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return _make(a.value + b.value, (a, b), backward)


def sub(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    _check_broadcast(a.shape, b.shape, "sub")
    sa, sb = a.shape, b.shape

    def backward(g):
        return _unbroadcast(g, sa), _unbroadcast(-g, sb)

    return _make(a.value - b.value, (a, b), backward)


def mul(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    _check_broadcast(a.shape, b.shape, "mul")
    av, bv = a.value, b.value

    def backward(g):
        return _unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)

    return _make(av * bv, (a, b), backward)


def square(x) -> Node:
    x = as_node(x)
    xv = x.value

    def backward(g):
        return (2.0 * xv * g,)

    return _make(xv * xv, (x,), backward)


def absolute(x) -> Node:
    x = as_node(x)
    xv = x.value

    def backward(g):
        return (np.sign(xv) * g,)

    return _make(np.abs(xv), (x,), backward)


def tanh(x) -> Node:
    x = as_node(x)
    y = np.tanh(x.value)

    def backward(g):
        return ((1.0 - y * y) * g,)

    return _make(y, (x,), backward)


def clamped_sqrt(x, eps: float = SQRT_EPS) -> Node:
    """sqrt(max(x, eps)) element-wise.

    The gradient is that of the clamped expression: 1 / (2 sqrt(x)) where
    x > eps and 0 inside the clamp.
    """
    x = as_node(x)
    active = x.value > eps
    y = np.sqrt(np.maximum(x.value, eps))

    def backward(g):
        return (np.where(active, 0.5 / y, 0.0) * g,)

    return _make(y, (x,), backward)


# linear algebra and reductions

def transpose(x) -> Node:
    x = as_node(x)
    if x.value.ndim != 2:
        raise ValueError("transpose expects a matrix")

    def backward(g):
        return (g.T,)

    return _make(x.value.T, (x,), backward)


def matmul(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    av, bv = a.value, b.value
    if av.ndim not in (1, 2) or bv.ndim not in (1, 2):
        raise ValueError("matmul expects vectors or matrices")
    if av.shape[-1] != bv.shape[0]:
        raise ValueError(f"matmul: shape mismatch {av.shape} @ {bv.shape}")

    def backward(g):
        if av.ndim == 2 and bv.ndim == 2:
            return g @ bv.T, av.T @ g
        if av.ndim == 2:
            return np.outer(g, bv), av.T @ g
        if bv.ndim == 2:
            return bv @ g, np.outer(av, g)
        return g * bv, g * av

    return _make(av @ bv, (a, b), backward)


def sum(x) -> Node:  # noqa: A001 - mirrors numpy naming
    x = as_node(x)
    shape = x.shape

    def backward(g):
        return (np.broadcast_to(g, shape).copy(),)

    return _make(x.value.sum(), (x,), backward)


def mean(x, axis: int | None = None) -> Node:
    x = as_node(x)
    xv = x.value
    if axis is None:
        n = xv.size

        def backward(g):
            return (np.full(xv.shape, g / n),)

        return _make(xv.mean(), (x,), backward)
    if axis != 0 or xv.ndim != 2:
        raise ValueError("mean supports axis=None or axis=0 on a matrix")
    n = xv.shape[0]

    def backward(g):
        return (np.broadcast_to(g / n, xv.shape).copy(),)

    return _make(xv.mean(axis=0), (x,), backward)


def softmax(z, temperature: float = 1.0) -> Node:
    """Softmax of a vector of logits divided by ``temperature``."""
    z = as_node(z)
    if z.value.ndim != 1:
        raise ValueError("softmax expects a vector")
    if z.value.size == 0:
        raise ValueError("empty sequence")
    if not temperature > 0:
        raise ValueError("invalid temperature")
    s = z.value / temperature
    e = np.exp(s - s.max())
    p = e / e.sum()

    def backward(g):
        return (p * (g - np.dot(g, p)) / temperature,)

    return _make(p, (z,), backward)


def concat(nodes: Sequence, axis: int = 0) -> Node:
    nodes = [as_node(n) for n in nodes]
    values = [n.value for n in nodes]
    out = np.concatenate(values, axis=axis)
    bounds = np.cumsum([v.shape[axis] for v in values])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _make(out, nodes, backward)


def stack(nodes: Sequence) -> Node:
    """Stack equal-length vectors into the rows of a matrix."""
    nodes = [as_node(n) for n in nodes]
    out = np.stack([n.value for n in nodes])

    def backward(g):
        return tuple(g[i] for i in range(len(nodes)))

    return _make(out, nodes, backward)


class _RowGrad:
    """Gradient that is zero outside rows [start, stop); added in place."""

    __slots__ = ("start", "stop", "g")

    def __init__(self, start, stop, g):
        self.start, self.stop, self.g = start, stop, g


def rows(x, start: int, stop: int) -> Node:
    x = as_node(x)
    xv = x.value

    def backward(g):
        return (_RowGrad(start, stop, g),)

    return _make(xv[start:stop], (x,), backward)


# backward pass

def _topological(output: Node) -> list[Node]:
    order, seen = [], set()
    stack_ = [(output, False)]
    while stack_:
        node, expanded = stack_.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack_.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack_.append((p, False))
    return order


def backward(output: Node) -> dict[str, np.ndarray]:
    """Propagate d(output)/d(leaf) into every leaf that requires a gradient.

    Leaf gradients accumulate across calls until ``zero_grad``. Returns the
    accumulated gradients of named leaves.
    """
    if output.value.size != 1 or output.value.ndim != 0:
        raise ValueError(f"backward needs a scalar output, got shape {output.shape}")
    if not output.requires_grad:
        return {}
    order = _topological(output)
    grads = {id(output): np.ones(())}
    owned = set()  # keys whose buffer is private and safe to update in place
    named = {}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.backward_fn is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            if node.name is not None:
                named[node.name] = node.grad
            continue
        for parent, pg in zip(node.parents, node.backward_fn(g)):
            if not parent.requires_grad:
                continue
            _accumulate(grads, owned, id(parent), pg, parent.value.shape)
    return named


def _accumulate(grads, owned, key, pg, shape):
    if isinstance(pg, _RowGrad):
        if key not in grads:
            grads[key] = np.zeros(shape)
            owned.add(key)
        elif key not in owned:
            grads[key] = grads[key].copy()
            owned.add(key)
        grads[key][pg.start:pg.stop] += pg.g
    elif key not in grads:
        grads[key] = pg
    elif key in owned:
        grads[key] += pg
    else:
        grads[key] = grads[key] + pg
        owned.add(key)


def zero_grad(params: Iterable[Node]):
    for p in params:
        p.grad = None


def grad_check(f: Callable[[Node], Node], x, h: float = 1e-5) -> float:
    """Max relative error between reverse-mode and central-difference gradients.

    ``f`` maps a Node holding ``x`` to a scalar Node. The per-coordinate error
    is |a - c| / (|a| + |c| + 1e-12).
    """
    x = np.array(x, dtype=np.float64)
    leaf = Node(x.copy(), requires_grad=True)
    out = f(leaf)
    backward(out)
    analytic = np.zeros_like(x) if leaf.grad is None else leaf.grad
    numeric = np.empty_like(x)
    flat = x.reshape(-1)
    nflat = numeric.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = float(f(Node(x.copy())).value)
            flat[i] = orig - h
            fm = float(f(Node(x.copy())).value)
            flat[i] = orig
            nflat[i] = (fp - fm) / (2.0 * h)
    err = np.abs(analytic - numeric) / (np.abs(analytic) + np.abs(numeric) + 1e-12)
    return float(err.max()) if err.size else 0.0
