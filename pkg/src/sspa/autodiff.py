"""Reverse-mode automatic differentiation over dense float64 arrays.

The graph is built eagerly: every operation returns a :class:`DiffNode` that
remembers its parents and a closure routing the upstream gradient back to
them.  All arithmetic happens in float64; elementwise ops follow numpy
broadcasting and ``matmul`` additionally supports a leading batch axis so a
whole minibatch can share one graph.

Thread-safety: forward evaluation with frozen parameters may run
concurrently across inputs; building a graph that will receive a backward
pass is single-writer.
"""

from __future__ import annotations

import numpy as np

Array = np.ndarray


class DiffNode:
    """A value in the differentiation graph.

    ``data`` and ``grad`` always share one shape.  Nodes with
    ``requires_grad=False`` never accumulate gradient and are skipped during
    backpropagation.
    """

    __slots__ = ("data", "grad", "requires_grad", "parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Array | None = None
        self.requires_grad = requires_grad
        self.parents: tuple[DiffNode, ...] = ()
        self._backward = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"DiffNode(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # operator sugar; the free functions below do the work
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

    def __neg__(self):
        return neg(self)


def parameter(data, requires_grad: bool = True) -> DiffNode:
    """Wrap an array as a (by default trainable) leaf node."""
    return DiffNode(np.array(data, dtype=np.float64), requires_grad=requires_grad)


def constant(data) -> DiffNode:
    return DiffNode(data, requires_grad=False)


def as_node(x) -> DiffNode:
    return x if isinstance(x, DiffNode) else constant(x)


def _make(data: Array, parents: tuple[DiffNode, ...], backward_fn) -> DiffNode:
    out = DiffNode(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.parents = parents
        out._backward = backward_fn
    return out


def _unbroadcast(g: Array, shape: tuple[int, ...]) -> Array:
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b) -> DiffNode:
    a, b = as_node(a), as_node(b)
    data = a.data + b.data

    def back(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _make(data, (a, b), back)


def sub(a, b) -> DiffNode:
    a, b = as_node(a), as_node(b)
    data = a.data - b.data

    def back(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return _make(data, (a, b), back)


def mul(a, b) -> DiffNode:
    a, b = as_node(a), as_node(b)
    data = a.data * b.data

    def back(g):
        return (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        )

    return _make(data, (a, b), back)


def neg(a) -> DiffNode:
    a = as_node(a)
    return _make(-a.data, (a,), lambda g: (-g,))


def power(a, exponent: float) -> DiffNode:
    """Elementwise ``a ** exponent`` for a constant real exponent."""
    a = as_node(a)
    data = a.data ** exponent
    if exponent == 0.0:
        return _make(data, (a,), lambda g: (np.zeros_like(a.data),))

    def back(g):
        return (g * exponent * a.data ** (exponent - 1.0),)

    return _make(data, (a,), back)


def clip(a, lo: float, hi: float) -> DiffNode:
    """Clamp values to [lo, hi]; gradient passes only strictly inside."""
    a = as_node(a)
    data = np.clip(a.data, lo, hi)
    inside = (a.data > lo) & (a.data < hi)

    def back(g):
        return (g * inside,)

    return _make(data, (a,), back)


# ---------------------------------------------------------------------------
# nonlinearities


def relu(a) -> DiffNode:
    a = as_node(a)
    mask = a.data > 0

    def back(g):
        return (g * mask,)

    return _make(a.data * mask, (a,), back)


def tanh(a) -> DiffNode:
    a = as_node(a)
    t = np.tanh(a.data)

    def back(g):
        return (g * (1.0 - t * t),)

    return _make(t, (a,), back)


def sigmoid(a) -> DiffNode:
    a = as_node(a)
    x = a.data
    s = np.empty_like(x)
    pos = x >= 0
    s[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    s[~pos] = ex / (1.0 + ex)

    def back(g):
        return (g * s * (1.0 - s),)

    return _make(s, (a,), back)


def exp(a) -> DiffNode:
    a = as_node(a)
    e = np.exp(a.data)

    def back(g):
        return (g * e,)

    return _make(e, (a,), back)


def log(a) -> DiffNode:
    a = as_node(a)

    def back(g):
        return (g / a.data,)

    return _make(np.log(a.data), (a,), back)


# ---------------------------------------------------------------------------
# shape manipulation


def reshape(a, shape) -> DiffNode:
    a = as_node(a)
    data = a.data.reshape(shape)

    def back(g):
        return (g.reshape(a.data.shape),)

    return _make(data, (a,), back)


def swaplast(a) -> DiffNode:
    """Transpose the last two axes (matrix transpose for 2-d input)."""
    a = as_node(a)
    data = np.swapaxes(a.data, -1, -2)

    def back(g):
        return (np.swapaxes(g, -1, -2),)

    return _make(data, (a,), back)


def concat(nodes, axis: int = -1) -> DiffNode:
    nodes = tuple(as_node(n) for n in nodes)
    data = np.concatenate([n.data for n in nodes], axis=axis)
    sizes = [n.data.shape[axis] for n in nodes]
    offsets = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.split(g, offsets, axis=axis))

    return _make(data, nodes, back)


def narrow(a, axis: int, start: int, stop: int) -> DiffNode:
    """Contiguous slice [start, stop) along one axis."""
    a = as_node(a)
    index = [slice(None)] * a.data.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)

    def back(g):
        full = np.zeros_like(a.data)
        full[index] = g
        return (full,)

    return _make(a.data[index], (a,), back)


# ---------------------------------------------------------------------------
# contractions and reductions


def matmul(a, b) -> DiffNode:
    """Matrix product; operands must be 2-d or 3-d (leading batch axis)."""
    a, b = as_node(a), as_node(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ValueError("matmul operands must be at least 2-d")
    data = a.data @ b.data

    def back(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.data.shape), _unbroadcast(gb, b.data.shape)

    return _make(data, (a, b), back)


def sum_(a, axis=None, keepdims: bool = False) -> DiffNode:
    a = as_node(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.data.shape).copy(),)

    return _make(data, (a,), back)


def mean(a, axis=None, keepdims: bool = False) -> DiffNode:
    a = as_node(a)
    data = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.data.size if axis is None else a.data.shape[axis]

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.data.shape) / count,)

    return _make(data, (a,), back)


def max_(a, axis: int, keepdims: bool = False) -> DiffNode:
    """Maximum along one axis; ties share the gradient equally."""
    a = as_node(a)
    data = a.data.max(axis=axis, keepdims=keepdims)

    def back(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        top = a.data.max(axis=axis, keepdims=True)
        mask = (a.data == top).astype(np.float64)
        mask /= mask.sum(axis=axis, keepdims=True)
        return (g * mask,)

    return _make(data, (a,), back)


def softmax_lastaxis(a) -> DiffNode:
    """Numerically stable softmax over the last axis."""
    a = as_node(a)
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def back(g):
        dot = (g * y).sum(axis=-1, keepdims=True)
        return ((g - dot) * y,)

    return _make(y, (a,), back)


def softmax_rows(m, temperature: float = 1.0) -> DiffNode:
    """Row-wise softmax of ``m / temperature`` with max-subtraction.

    Raises if any logit is non-finite or the temperature is not positive.
    """
    m = as_node(m)
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    if not np.isfinite(m.data).all():
        raise ValueError("non-finite logits")
    if temperature == 1.0:
        return softmax_lastaxis(m)
    return softmax_lastaxis(mul(m, 1.0 / temperature))


# ---------------------------------------------------------------------------
# backward pass


def backward(root: DiffNode) -> None:
    """Backpropagate from a scalar root; the root's gradient is set to 1."""
    if root.data.size != 1:
        raise ValueError("backward requires a scalar root")
    if not root.requires_grad:
        return

    topo: list[DiffNode] = []
    visited: set[int] = set()
    stack: list[tuple[DiffNode, bool]] = [(root, False)]
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

    root.grad = np.ones_like(root.data)
    for node in reversed(topo):
        if node._backward is None or node.grad is None:
            continue
        for p, g in zip(node.parents, node._backward(node.grad)):
            if g is None or not p.requires_grad:
                continue
            if p.grad is None:
                p.grad = np.zeros_like(p.data)
            p.grad += g


def reachable_parameters(roots) -> dict[int, DiffNode]:
    """Leaf nodes with requires_grad reachable from the given root nodes."""
    found: dict[int, DiffNode] = {}
    seen: set[int] = set()
    stack = [r for r in roots if r is not None]
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        if node.requires_grad and not node.parents:
            found[id(node)] = node
        stack.extend(node.parents)
    return found
