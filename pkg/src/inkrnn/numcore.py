"""Minimal reverse-mode differentiation over numpy arrays.

A :class:`Tape` records every primitive applied to watched values while it
is open.  :func:`grad` then sweeps the record backwards.  Arrays carry an
optional leading batch axis everywhere; an affine map acts on the last
axis, so ``affine(x, W, b)`` computes ``x @ W.T + b``.

Outside an open tape the same functions just compute values, which is how
inference runs.
"""

import threading

import numpy as np
from scipy.special import expit

from .errors import NumericalError, ShapeError, TapeError

__all__ = [
    "Var",
    "Tape",
    "grad",
    "as_var",
    "affine",
    "add",
    "mul",
    "div",
    "transpose",
    "sigm",
    "tanh",
    "exp",
    "log",
    "maximum",
    "softmax",
    "log_softmax",
    "logsumexp",
    "vsum",
    "concat",
    "stack",
    "reshape",
    "dropout",
    "finite_difference",
    "relative_error",
]

_local = threading.local()


def _active():
    stack = getattr(_local, "stack", None)
    return stack[-1] if stack else None


class Var:
    """A value, plus what is needed to push a gradient back through it."""

    __slots__ = ("value", "grad", "parents", "backward", "needs_grad", "tape", "name")
    __array_ufunc__ = None  # make ndarray <op> Var defer to Var's reflected ops

    def __init__(self, value, parents=(), backward=None, needs_grad=False, tape=None, name=None):
        self.value = value
        self.grad = None
        self.parents = parents
        self.backward = backward
        self.needs_grad = needs_grad
        self.tape = tape
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Var{tag}(shape={self.value.shape})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(other))

    def __rsub__(self, other):
        return add(other, neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __getitem__(self, idx):
        return getitem(self, idx)


class Tape:
    """Ordered record of the primitives applied during one forward pass.

    Use as a context manager; parameters enter through :meth:`param`.
    """

    def __init__(self):
        self.nodes = []
        self.leaves = {}

    def __enter__(self):
        if not hasattr(_local, "stack"):
            _local.stack = []
        _local.stack.append(self)
        return self

    def __exit__(self, *exc):
        _local.stack.pop()
        return False

    def param(self, name, value):
        if name in self.leaves:
            raise TapeError(f"parameter {name!r} already watched on this tape")
        v = Var(np.asarray(value), needs_grad=True, tape=self, name=name)
        self.leaves[name] = v
        return v

    def params(self, arrays):
        return {k: self.param(k, v) for k, v in arrays.items()}

    def __len__(self):
        return len(self.nodes)


def as_var(x):
    if isinstance(x, Var):
        return x
    return Var(np.asarray(x, dtype=float))


def _node(value, parents, backward):
    tape = _active()
    if tape is not None:
        for p in parents:
            if p.needs_grad:
                node = Var(value, parents, backward, True, tape)
                tape.nodes.append(node)
                return node
    return Var(value)


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def grad(tape, loss):
    """Gradient of scalar ``loss`` with respect to every parameter watched
    on ``tape``.  Parameters the loss does not depend on get zeros."""
    if not isinstance(loss, Var) or loss.tape is not tape:
        raise TapeError("loss was not produced under this tape")
    if loss.value.size != 1:
        raise TapeError(f"loss must be a scalar, got shape {loss.value.shape}")
    for node in tape.nodes:
        node.grad = None
    for leaf in tape.leaves.values():
        leaf.grad = None
    loss.grad = np.ones_like(loss.value)
    owned = set()
    for node in reversed(tape.nodes):
        g = node.grad
        if g is None:
            continue
        for parent, pg in zip(node.parents, node.backward(g)):
            if pg is None or not parent.needs_grad:
                continue
            if isinstance(pg, _SliceGrad):
                if id(parent) not in owned:
                    base = parent.grad
                    parent.grad = np.zeros(parent.value.shape) if base is None else base.copy()
                    owned.add(id(parent))
                parent.grad[pg.idx] += pg.g
            elif parent.grad is None:
                parent.grad = pg
            else:
                parent.grad = parent.grad + pg
                owned.add(id(parent))
    return {
        name: (leaf.grad if leaf.grad is not None else np.zeros_like(leaf.value))
        for name, leaf in tape.leaves.items()
    }


# ---------------------------------------------------------------------------
# primitives


def add(a, b):
    a, b = as_var(a), as_var(b)
    sa, sb = a.value.shape, b.value.shape

    def back(g):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return _node(a.value + b.value, (a, b), back)


def neg(a):
    a = as_var(a)
    return _node(-a.value, (a,), lambda g: (-g,))


def mul(a, b):
    a, b = as_var(a), as_var(b)
    av, bv = a.value, b.value

    def back(g):
        return _unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)

    return _node(av * bv, (a, b), back)


def div(a, b):
    a, b = as_var(a), as_var(b)
    av, bv = a.value, b.value
    y = av / bv

    def back(g):
        ga = g / bv
        return _unbroadcast(ga, av.shape), _unbroadcast(-ga * y, bv.shape)

    return _node(y, (a, b), back)


def transpose(x):
    x = as_var(x)
    return _node(x.value.T, (x,), lambda g: (g.T,))


def affine(x, W, b=None):
    """``x @ W.T + b`` over the last axis of ``x``."""
    x, W = as_var(x), as_var(W)
    xv, Wv = x.value, W.value
    if Wv.ndim != 2 or xv.shape[-1:] != Wv.shape[1:]:
        raise ShapeError(f"affine: input {xv.shape} does not match weight {Wv.shape}")
    out = xv @ Wv.T
    parents = (x, W)
    if b is not None:
        b = as_var(b)
        if b.value.shape != (Wv.shape[0],):
            raise ShapeError(f"affine: bias {b.value.shape} does not match weight {Wv.shape}")
        out = out + b.value
        parents = (x, W, b)

    def back(g):
        g2 = g.reshape(-1, g.shape[-1])
        gx = g @ Wv if x.needs_grad else None
        gW = g2.T @ xv.reshape(-1, xv.shape[-1]) if W.needs_grad else None
        if b is None:
            return gx, gW
        return gx, gW, g2.sum(axis=0)

    return _node(out, parents, back)


def sigm(x):
    x = as_var(x)
    y = expit(x.value)
    return _node(y, (x,), lambda g: (g * y * (1.0 - y),))


def tanh(x):
    x = as_var(x)
    y = np.tanh(x.value)
    return _node(y, (x,), lambda g: (g * (1.0 - y * y),))


def exp(x):
    x = as_var(x)
    y = np.exp(x.value)
    return _node(y, (x,), lambda g: (g * y,))


def log(x):
    x = as_var(x)
    xv = x.value
    return _node(np.log(xv), (x,), lambda g: (g / xv,))


def maximum(x, floor):
    """Elementwise ``max(x, floor)`` for a constant ``floor``."""
    x = as_var(x)
    keep = x.value > floor
    return _node(np.where(keep, x.value, floor), (x,), lambda g: (g * keep,))


def softmax(x, axis=-1):
    x = as_var(x)
    z = x.value - x.value.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _node(y, (x,), back)


def log_softmax(x, axis=-1):
    x = as_var(x)
    z = x.value - x.value.max(axis=axis, keepdims=True)
    y = z - np.log(np.exp(z).sum(axis=axis, keepdims=True))

    def back(g):
        return (g - np.exp(y) * g.sum(axis=axis, keepdims=True),)

    return _node(y, (x,), back)


def logsumexp(x, axis=-1):
    x = as_var(x)
    m = x.value.max(axis=axis, keepdims=True)
    s = np.log(np.exp(x.value - m).sum(axis=axis, keepdims=True)) + m
    w = np.exp(x.value - s)

    def back(g):
        return (np.expand_dims(g, axis) * w,)

    return _node(np.squeeze(s, axis=axis), (x,), back)


def vsum(x, axis=None):
    x = as_var(x)
    shape = x.value.shape

    def back(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _node(np.asarray(x.value.sum(axis=axis)), (x,), back)


class _SliceGrad:
    """Gradient that is nonzero only on ``parent[idx]``; accumulated in
    place so slicing a long array step by step stays linear."""

    __slots__ = ("idx", "g")

    def __init__(self, idx, g):
        self.idx = idx
        self.g = g


def getitem(x, idx):
    x = as_var(x)
    shape = x.value.shape
    parts = idx if isinstance(idx, tuple) else (idx,)
    fancy = any(isinstance(i, (np.ndarray, list)) for i in parts)

    def back(g):
        if not fancy:
            return (_SliceGrad(idx, g),)
        out = np.zeros(shape, dtype=g.dtype)
        np.add.at(out, idx, g)
        return (out,)

    return _node(x.value[idx], (x,), back)


def concat(xs, axis=-1):
    xs = [as_var(x) for x in xs]
    sizes = [x.value.shape[axis] for x in xs]
    cuts = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.split(g, cuts, axis=axis))

    return _node(np.concatenate([x.value for x in xs], axis=axis), tuple(xs), back)


def stack(xs, axis=1):
    xs = [as_var(x) for x in xs]

    def back(g):
        return tuple(np.moveaxis(g, axis, 0))

    return _node(np.stack([x.value for x in xs], axis=axis), tuple(xs), back)


def reshape(x, shape):
    x = as_var(x)
    old = x.value.shape
    return _node(x.value.reshape(shape), (x,), lambda g: (g.reshape(old),))


def dropout(x, p, rng):
    """Inverted dropout: zero entries with probability ``p``, scale the rest
    by ``1/(1-p)``."""
    if p <= 0.0:
        return as_var(x)
    x = as_var(x)
    mask = (rng.random(x.value.shape) >= p) / (1.0 - p)
    return mul(x, mask)


# ---------------------------------------------------------------------------
# numeric oracle


def finite_difference(f, theta, h=1e-5):
    """Centered-difference gradient of scalar ``f`` at ``theta``.

    ``theta`` is an array (or scalar) or a dict of arrays; the result has
    the same structure.  ``f`` is called with a perturbed copy each time.
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    if isinstance(theta, dict):
        work = {k: np.array(v, dtype=np.float64) for k, v in theta.items()}
        out = {}
        for name, arr in work.items():
            out[name] = _fd_array(lambda: f(work), arr, h)
        return out
    arr = np.array(theta, dtype=np.float64)
    return _fd_array(lambda: f(arr), arr, h)


def _fd_array(call, arr, h):
    g = np.zeros_like(arr)
    flat = arr.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(call())
        flat[i] = orig - h
        fm = float(call())
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericalError(f"non-finite function value at coordinate {i}")
        gflat[i] = (fp - fm) / (2.0 * h)
    return g


def relative_error(a, b):
    """Elementwise ``|a-b| / max(|a|, |b|, 1e-8)``."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)
