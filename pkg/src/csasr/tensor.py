"""Reverse-mode automatic differentiation over dense float64 arrays.

Graphs are built define-by-run: every operation returns a new ``Tensor``
holding its value, links to its inputs, and a backward closure. Creation
order doubles as a topological order (an op's inputs always exist before
it), so ``backward()`` just walks the reachable nodes by descending id.
A graph lives for one forward/backward cycle and is then dropped;
parameters persist across graphs and accumulate gradients until
``zero_grad``.

Tensors are immutable by convention once created (nothing in this package
writes to ``.data`` after construction), which makes read-only sharing
across threads safe. Graph construction and backward are single-threaded.
"""

import itertools
from contextlib import contextmanager

import numpy as np

from .errors import GraphError, ShapeError, SingularMatrixError

_ids = itertools.count()
_grad_enabled = True

# inverse() refuses matrices whose 1-norm condition estimate exceeds this
MAX_CONDITION = 1e12


@contextmanager
def no_grad():
    """Disable graph recording inside the block (pure forward evaluation)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "parents", "name", "requires_grad", "_backward", "_id", "_done")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.parents = ()
        self.name = name
        self.requires_grad = requires_grad
        self._backward = None
        self._id = next(_ids)
        self._done = False

    # -- graph plumbing ------------------------------------------------------

    def _add_grad(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64)  # own the buffer
        else:
            self.grad += g

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Propagate d(self)/d(leaf) into every reachable requires_grad leaf.

        self must be scalar. Parameter gradients accumulate across calls on
        *different* graphs; calling backward twice on the same node raises.
        """
        if self.data.shape != ():
            raise GraphError(f"backward() needs a scalar loss, got shape {self.data.shape}")
        if self._done:
            raise GraphError("backward() already called on this node")
        self._done = True
        nodes = [self]
        seen = {id(self)}
        stack = [self]
        while stack:
            for p in stack.pop().parents:
                if p.requires_grad and id(p) not in seen:
                    seen.add(id(p))
                    nodes.append(p)
                    stack.append(p)
        nodes.sort(key=lambda n: n._id, reverse=True)
        self.grad = np.array(1.0)
        for n in nodes:
            if n._backward is not None and n.grad is not None:
                n._backward(n.grad)

    def detach(self):
        """Same values, cut from the graph."""
        return Tensor(self.data)

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        head = f"Tensor(shape={self.data.shape}"
        if self.name:
            head += f", name={self.name!r}"
        return head + ")"

    # -- operators -----------------------------------------------------------

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

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, p):
        return pow_const(self, p)

    def __getitem__(self, key):
        return slice_(self, key)

    # -- method sugar ---------------------------------------------------------

    def tanh(self):
        return tanh(self)

    def sigmoid(self):
        return sigmoid(self)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def softmax(self):
        return softmax(self)

    def log_softmax(self):
        return log_softmax(self)

    def logsumexp(self):
        return logsumexp(self)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None):
        return mean(self, axis)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) != 1 or isinstance(shape[0], int) else shape[0])

    def transpose(self):
        return transpose(self)

    @property
    def T(self):
        return transpose(self)

    def trace(self):
        return trace(self)

    def inverse(self):
        return inverse(self)


def tensor(data) -> Tensor:
    return data if isinstance(data, Tensor) else Tensor(data)


def parameter(data, name=None) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True, name=name)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, backward):
    """Build an op result; records the backward rule only when needed."""
    if _grad_enabled and any(p.requires_grad for p in parents):
        out = Tensor(data, requires_grad=True)
        out.parents = parents
        out._backward = backward
        return out
    return Tensor(data)


def _unbroadcast(grad, shape):
    """Sum-reduce grad back to `shape` (inverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, s in enumerate(shape):
        if s == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


def _broadcast_shapes(op, a, b):
    try:
        np.broadcast_shapes(a.data.shape, b.data.shape)
    except ValueError:
        raise ShapeError(op, a.data.shape, b.data.shape) from None


# -- elementwise -------------------------------------------------------------


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shapes("add", a, b)

    def backward(grad):
        if a.requires_grad:
            a._add_grad(_unbroadcast(grad, a.data.shape))
        if b.requires_grad:
            b._add_grad(_unbroadcast(grad, b.data.shape))

    return _node(a.data + b.data, (a, b), backward)


def sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shapes("sub", a, b)

    def backward(grad):
        if a.requires_grad:
            a._add_grad(_unbroadcast(grad, a.data.shape))
        if b.requires_grad:
            b._add_grad(_unbroadcast(-grad, b.data.shape))

    return _node(a.data - b.data, (a, b), backward)


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shapes("mul", a, b)

    def backward(grad):
        if a.requires_grad:
            a._add_grad(_unbroadcast(grad * b.data, a.data.shape))
        if b.requires_grad:
            b._add_grad(_unbroadcast(grad * a.data, b.data.shape))

    return _node(a.data * b.data, (a, b), backward)


def div(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shapes("div", a, b)

    def backward(grad):
        if a.requires_grad:
            a._add_grad(_unbroadcast(grad / b.data, a.data.shape))
        if b.requires_grad:
            b._add_grad(_unbroadcast(-grad * a.data / (b.data * b.data), b.data.shape))

    return _node(a.data / b.data, (a, b), backward)


def pow_const(a, p):
    a = _as_tensor(a)
    p = float(p)

    def backward(grad):
        if a.requires_grad:
            a._add_grad(grad * p * a.data ** (p - 1.0))

    return _node(a.data**p, (a,), backward)


def tanh(a):
    a = _as_tensor(a)
    out_data = np.tanh(a.data)

    def backward(grad):
        if a.requires_grad:
            a._add_grad(grad * (1.0 - out_data * out_data))

    return _node(out_data, (a,), backward)


def sigmoid(a):
    a = _as_tensor(a)
    x = a.data
    out_data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def backward(grad):
        if a.requires_grad:
            a._add_grad(grad * out_data * (1.0 - out_data))

    return _node(out_data, (a,), backward)


def exp(a):
    a = _as_tensor(a)
    out_data = np.exp(a.data)

    def backward(grad):
        if a.requires_grad:
            a._add_grad(grad * out_data)

    return _node(out_data, (a,), backward)


def log(a):
    a = _as_tensor(a)

    def backward(grad):
        if a.requires_grad:
            a._add_grad(grad / a.data)

    return _node(np.log(a.data), (a,), backward)


def maximum(a, floor):
    """Elementwise max(a, floor) for a scalar floor; gradient flows where a > floor."""
    a = _as_tensor(a)
    floor = float(floor)

    def backward(grad):
        if a.requires_grad:
            a._add_grad(grad * (a.data > floor))

    return _node(np.maximum(a.data, floor), (a,), backward)


# -- reductions over the last axis --------------------------------------------


def softmax(a):
    a = _as_tensor(a)
    shifted = a.data - np.max(a.data, axis=-1, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=-1, keepdims=True)

    def backward(grad):
        if a.requires_grad:
            inner = (grad * out_data).sum(axis=-1, keepdims=True)
            a._add_grad(out_data * (grad - inner))

    return _node(out_data, (a,), backward)


def log_softmax(a):
    a = _as_tensor(a)
    m = np.max(a.data, axis=-1, keepdims=True)
    shifted = a.data - m
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    out_data = shifted - lse

    def backward(grad):
        if a.requires_grad:
            p = np.exp(out_data)
            a._add_grad(grad - p * grad.sum(axis=-1, keepdims=True))

    return _node(out_data, (a,), backward)


def logsumexp(a):
    """log sum exp over the last axis; -inf entries contribute nothing."""
    a = _as_tensor(a)
    m = np.max(a.data, axis=-1, keepdims=True)
    safe_m = np.where(np.isfinite(m), m, 0.0)
    s = np.exp(a.data - safe_m).sum(axis=-1, keepdims=True)
    out_keep = safe_m + np.log(s)
    out_keep = np.where(np.isfinite(m), out_keep, m)
    out_data = out_keep.reshape(a.data.shape[:-1])

    def backward(grad):
        if a.requires_grad:
            w = np.exp(a.data - out_keep)
            a._add_grad(np.expand_dims(grad, -1) * w)

    return _node(out_data, (a,), backward)


# -- general reductions / reshaping -------------------------------------------


def sum_(a, axis=None, keepdims=False):
    a = _as_tensor(a)
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(grad):
        if a.requires_grad:
            g = grad
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            a._add_grad(np.broadcast_to(g, a.data.shape))

    return _node(out_data, (a,), backward)


def mean(a, axis=None):
    """Mean over `axis` (axis=0 on a matrix averages the rows)."""
    a = _as_tensor(a)
    out_data = a.data.mean(axis=axis)
    count = a.data.size if axis is None else a.data.shape[axis]

    def backward(grad):
        if a.requires_grad:
            g = grad / count
            if axis is not None:
                g = np.expand_dims(g, axis)
            a._add_grad(np.broadcast_to(g, a.data.shape))

    return _node(out_data, (a,), backward)


def reshape(a, shape):
    a = _as_tensor(a)

    def backward(grad):
        if a.requires_grad:
            a._add_grad(grad.reshape(a.data.shape))

    return _node(a.data.reshape(shape), (a,), backward)


def transpose(a):
    a = _as_tensor(a)
    if a.data.ndim != 2:
        raise ShapeError("transpose", a.data.shape)

    def backward(grad):
        if a.requires_grad:
            a._add_grad(grad.T)

    return _node(a.data.T.copy(), (a,), backward)


def concat(tensors, axis=0):
    tensors = [_as_tensor(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(grad):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * grad.ndim
                idx[axis] = slice(lo, hi)
                t._add_grad(grad[tuple(idx)])

    return _node(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), backward)


def stack(tensors, axis=0):
    tensors = [_as_tensor(t) for t in tensors]

    def backward(grad):
        for i, t in enumerate(tensors):
            if t.requires_grad:
                t._add_grad(np.take(grad, i, axis=axis))

    return _node(np.stack([t.data for t in tensors], axis=axis), tuple(tensors), backward)


def slice_(a, key):
    a = _as_tensor(a)
    out_data = a.data[key]

    def backward(grad):
        if a.requires_grad:
            g = np.zeros_like(a.data)
            g[key] = grad
            a._add_grad(g)

    return _node(np.array(out_data), (a,), backward)


def gather_rows(a, indices):
    """Select rows of a 2-D matrix: out[i] = a[indices[i]]. Repeats allowed."""
    a = _as_tensor(a)
    indices = np.asarray(indices, dtype=np.int64)
    if a.data.ndim != 2:
        raise ShapeError("gather_rows", a.data.shape)

    def backward(grad):
        if a.requires_grad:
            g = np.zeros_like(a.data)
            np.add.at(g, indices, grad)
            a._add_grad(g)

    return _node(a.data[indices], (a,), backward)


def take_along_rows(a, cols):
    """Pick one entry per row of a 2-D matrix: out[i] = a[i, cols[i]]."""
    a = _as_tensor(a)
    cols = np.asarray(cols, dtype=np.int64)
    if a.data.ndim != 2 or cols.shape != (a.data.shape[0],):
        raise ShapeError("take_along_rows", a.data.shape, cols.shape)
    rows = np.arange(a.data.shape[0])

    def backward(grad):
        if a.requires_grad:
            g = np.zeros_like(a.data)
            np.add.at(g, (rows, cols), grad)
            a._add_grad(g)

    return _node(a.data[rows, cols], (a,), backward)


# -- linear algebra ------------------------------------------------------------


def matmul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError("matmul", a.data.shape, b.data.shape)

    def backward(grad):
        if a.requires_grad:
            a._add_grad(grad @ b.data.T)
        if b.requires_grad:
            b._add_grad(a.data.T @ grad)

    return _node(a.data @ b.data, (a, b), backward)


def outer(u, v):
    """Outer product of two vectors: out[i, j] = u[i] * v[j]."""
    u, v = _as_tensor(u), _as_tensor(v)
    if u.data.ndim != 1 or v.data.ndim != 1:
        raise ShapeError("outer", u.data.shape, v.data.shape)

    def backward(grad):
        if u.requires_grad:
            u._add_grad(grad @ v.data)
        if v.requires_grad:
            v._add_grad(u.data @ grad)

    return _node(np.outer(u.data, v.data), (u, v), backward)


def outer_accumulate(a, b):
    """Sum of per-row outer products: sum_i outer(a[i], b[i]) == a.T @ b."""
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[0] != b.data.shape[0]:
        raise ShapeError("outer_accumulate", a.data.shape, b.data.shape)
    return matmul(transpose(a), b)


def trace(a):
    a = _as_tensor(a)
    if a.data.ndim != 2 or a.data.shape[0] != a.data.shape[1]:
        raise ShapeError("trace", a.data.shape)
    n = a.data.shape[0]

    def backward(grad):
        if a.requires_grad:
            a._add_grad(grad * np.eye(n))

    return _node(np.trace(a.data), (a,), backward)


def inverse(a):
    """Matrix inverse with a conditioning guard.

    Refuses matrices whose 1-norm condition estimate exceeds MAX_CONDITION
    instead of returning garbage. Backward uses d(A^-1) = -A^-1 dA A^-1.
    """
    a = _as_tensor(a)
    if a.data.ndim != 2 or a.data.shape[0] != a.data.shape[1]:
        raise ShapeError("inverse", a.data.shape)
    try:
        inv_data = np.linalg.inv(a.data)
    except np.linalg.LinAlgError:
        raise SingularMatrixError("inverse of singular matrix", float("inf")) from None
    cond = np.linalg.norm(a.data, 1) * np.linalg.norm(inv_data, 1)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise SingularMatrixError("inverse refused: matrix too ill-conditioned", float(cond))

    def backward(grad):
        if a.requires_grad:
            a._add_grad(-inv_data.T @ grad @ inv_data.T)

    return _node(inv_data, (a,), backward)


def conv1d(signal, kernels):
    """1-D convolution of row signals with a bank of kernels, 'same' padding.

    signal: (L,) or (B, L); kernels: (C, k). Returns (L, C) or (B, L, C),
    out[b, i, c] = sum_j kernels[c, j] * padded_signal[b, i + j] with the
    signal zero-padded by (k-1)//2 on the left (CNN cross-correlation
    convention; kernels are learned so orientation is free).
    """
    signal, kernels = _as_tensor(signal), _as_tensor(kernels)
    if kernels.data.ndim != 2 or signal.data.ndim not in (1, 2):
        raise ShapeError("conv1d", signal.data.shape, kernels.data.shape)
    squeeze = signal.data.ndim == 1
    sig = signal.data[None, :] if squeeze else signal.data
    B, L = sig.shape
    C, k = kernels.data.shape
    pl = (k - 1) // 2
    padded = np.zeros((B, L + k - 1))
    padded[:, pl : pl + L] = sig
    out_data = np.zeros((B, L, C))
    for j in range(k):
        out_data += padded[:, j : j + L, None] * kernels.data[None, None, :, j]
    if squeeze:
        out_data = out_data[0]

    def backward(grad):
        g = grad[None, ...] if squeeze else grad
        if kernels.requires_grad:
            gk = np.zeros_like(kernels.data)
            for j in range(k):
                gk[:, j] = np.tensordot(g, padded[:, j : j + L], axes=([0, 1], [0, 1]))
            kernels._add_grad(gk)
        if signal.requires_grad:
            gp = np.zeros_like(padded)
            for j in range(k):
                gp[:, j : j + L] += g @ kernels.data[:, j]
            gs = gp[:, pl : pl + L]
            signal._add_grad(gs[0] if squeeze else gs)

    return _node(out_data, (signal, kernels), backward)
