"""Dense tensors with tape-based reverse-mode differentiation.

Every differentiable op records its output on the active :class:`Tape`.
Because ops are appended in execution order, the tape is already a
topological order of the graph; :func:`backward` walks it in reverse.

Tensors wrap a numpy array. Ops broadcast like numpy and reduce gradients
back to the operand shapes.
"""
from __future__ import annotations

import builtins
import contextlib
import threading

import numpy as np

__all__ = [
    "Tensor", "Tape", "tensor", "parameter", "no_grad", "get_tape", "backward",
    "add", "sub", "mul", "div", "neg", "matmul", "relu", "exp", "log", "sqrt",
    "softplus", "abs", "sum", "mean", "max", "softmax", "log_softmax",
    "l2norm", "concat", "reshape", "transpose", "cross", "getitem",
    "DimensionError", "ContractError", "DegenerateGradientError",
    "NonFiniteError",
]


class DimensionError(ValueError):
    pass


class ContractError(ValueError):
    pass


class DegenerateGradientError(ArithmeticError):
    pass


class NonFiniteError(ArithmeticError):
    pass


class Tape:
    """Ordered record of executed differentiable ops."""

    def __init__(self):
        self.nodes = []

    def record(self, node):
        self.nodes.append(node)

    def clear(self):
        self.nodes = []

    def __len__(self):
        return len(self.nodes)


_local = threading.local()


def get_tape():
    tape = getattr(_local, "tape", None)
    if tape is None:
        tape = _local.tape = Tape()
    return tape


def _grad_enabled():
    return getattr(_local, "enabled", True)


@contextlib.contextmanager
def no_grad():
    prev = _grad_enabled()
    _local.enabled = False
    try:
        yield
    finally:
        _local.enabled = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "name")

    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, dtype=None, name=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(arr) if requires_grad else None
        self._parents = ()
        self._backward = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self):
        return self._backward is None

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else self.data.item()

    def zero_grad(self):
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def backward(self):
        backward(self)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

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

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    @property
    def T(self):
        return transpose(self)


def tensor(data, requires_grad=False, dtype=None):
    return data if isinstance(data, Tensor) else Tensor(data, requires_grad, dtype)


def parameter(data, dtype=np.float64, name=None):
    return Tensor(np.array(data, dtype=dtype), requires_grad=True, name=name)


def _as_tensor(x, like=None):
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype))


def _pair(a, b):
    # constants adopt the dtype of the tensor operand so float32 graphs stay float32
    if isinstance(a, Tensor):
        return a, _as_tensor(b, like=a)
    if isinstance(b, Tensor):
        return _as_tensor(a, like=b), b
    return _as_tensor(a), _as_tensor(b)


def _is_basic_index(idx):
    items = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(i, (int, np.integer, slice)) or i is None or i is Ellipsis
               for i in items)


def _check_finite(arr, what):
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite values produced by {what}")


def _make(data, parents, backward_fn, what):
    _check_finite(data, what)
    out = Tensor(data)
    if _grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.grad = None
        out._parents = parents
        out._backward = backward_fn
        get_tape().record(out)
    return out


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad


def _accum(t, g):
    if not t.requires_grad:
        return
    g = _unbroadcast(g, t.data.shape)
    if t.grad is None:
        t.grad = np.array(g, dtype=t.data.dtype, copy=True)
    else:
        t.grad = t.grad + g


def backward(loss):
    """Populate ``grad`` of every leaf reachable from scalar ``loss``."""
    if not isinstance(loss, Tensor) or loss.data.size != 1:
        raise ContractError("backward requires a scalar loss tensor")
    tape = get_tape()
    if not loss.requires_grad:
        raise ContractError("loss does not depend on any tensor requiring grad")
    if loss.is_leaf:
        loss.grad = np.ones_like(loss.data) if loss.grad is None else loss.grad + 1
        return
    if not tape.nodes:
        raise ContractError("backward called on an empty tape")

    reachable = {id(loss)}
    stack = [loss]
    while stack:
        for p in stack.pop()._parents:
            if id(p) not in reachable:
                reachable.add(id(p))
                stack.append(p)
    loss.grad = np.ones_like(loss.data)
    leaves = {}
    try:
        for node in reversed(tape.nodes):
            for p in node._parents:
                if p.requires_grad and p.is_leaf:
                    leaves[id(p)] = p
            if id(node) not in reachable or node.grad is None:
                continue
            _check_finite(node.grad, "backward")
            node._backward(node.grad)
            # intermediate buffers are not needed after their adjoint ran
            node.grad = None
            node._backward = None
            node._parents = ()
        for leaf in leaves.values():
            if leaf.grad is None:
                leaf.grad = np.zeros_like(leaf.data)
            _check_finite(leaf.grad, "backward")
    finally:
        for node in tape.nodes:
            node.grad = None
        tape.clear()


# --- elementwise -----------------------------------------------------------

def add(a, b):
    a, b = _pair(a, b)

    def bw(g):
        _accum(a, g)
        _accum(b, g)

    return _make(a.data + b.data, (a, b), bw, "add")


def sub(a, b):
    a, b = _pair(a, b)

    def bw(g):
        _accum(a, g)
        _accum(b, -g)

    return _make(a.data - b.data, (a, b), bw, "sub")


def mul(a, b):
    a, b = _pair(a, b)

    def bw(g):
        if a.requires_grad:
            _accum(a, g * b.data)
        if b.requires_grad:
            _accum(b, g * a.data)

    return _make(a.data * b.data, (a, b), bw, "mul")


def div(a, b):
    a, b = _pair(a, b)
    out = a.data / b.data

    def bw(g):
        if a.requires_grad:
            _accum(a, g / b.data)
        if b.requires_grad:
            _accum(b, -g * out / b.data)

    return _make(out, (a, b), bw, "div")


def neg(a):
    a = _as_tensor(a)
    return _make(-a.data, (a,), lambda g: _accum(a, -g), "neg")


def relu(a):
    a = _as_tensor(a)
    mask = a.data > 0
    return _make(np.where(mask, a.data, 0), (a,), lambda g: _accum(a, g * mask), "relu")


def exp(a):
    a = _as_tensor(a)
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: _accum(a, g * out), "exp")


def log(a):
    a = _as_tensor(a)
    return _make(np.log(a.data), (a,), lambda g: _accum(a, g / a.data), "log")


def sqrt(a):
    a = _as_tensor(a)
    out = np.sqrt(a.data)
    return _make(out, (a,), lambda g: _accum(a, g * 0.5 / out), "sqrt")


def abs(a):
    a = _as_tensor(a)
    return _make(np.abs(a.data), (a,), lambda g: _accum(a, g * np.sign(a.data)), "abs")


def softplus(a):
    a = _as_tensor(a)
    x = a.data
    out = np.logaddexp(0, x)

    def bw(g):
        with np.errstate(over="ignore"):
            _accum(a, g / (1 + np.exp(-x)))

    return _make(out, (a,), bw, "softplus")


# --- reductions ------------------------------------------------------------

def _expand_reduced(g, shape, axis, keepdims):
    if axis is not None and not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, shape)


def sum(a, axis=None, keepdims=False):
    a = _as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        _accum(a, _expand_reduced(g, a.data.shape, axis, keepdims))

    return _make(np.asarray(out), (a,), bw, "sum")


def mean(a, axis=None, keepdims=False):
    a = _as_tensor(a)
    out = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.data.size / builtins.max(np.asarray(out).size, 1)

    def bw(g):
        _accum(a, _expand_reduced(g, a.data.shape, axis, keepdims) / count)

    return _make(np.asarray(out), (a,), bw, "mean")


def max(a, axis, keepdims=False):
    """Maximum along one axis; the gradient goes to the first maximizer."""
    a = _as_tensor(a)
    idx = np.expand_dims(a.data.argmax(axis=axis), axis)
    out = np.take_along_axis(a.data, idx, axis=axis)
    if not keepdims:
        out = np.squeeze(out, axis)

    def bw(g):
        full = np.zeros_like(a.data)
        gk = g if keepdims else np.expand_dims(g, axis)
        np.put_along_axis(full, idx, gk, axis=axis)
        _accum(a, full)

    return _make(out, (a,), bw, "max")


def softmax(a, axis=-1):
    a = _as_tensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        _accum(a, out * (g - (g * out).sum(axis=axis, keepdims=True)))

    return _make(out, (a,), bw, "softmax")


def log_softmax(a, axis=-1):
    a = _as_tensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse
    soft = np.exp(out)

    def bw(g):
        _accum(a, g - soft * g.sum(axis=axis, keepdims=True))

    return _make(out, (a,), bw, "log_softmax")


def l2norm(a, axis=-1, keepdims=False):
    """Euclidean norm along ``axis``.

    The adjoint is undefined at the zero vector; it raises there unless the
    incoming gradient for that entry is exactly zero.
    """
    a = _as_tensor(a)
    out = np.sqrt((a.data * a.data).sum(axis=axis, keepdims=True))

    def bw(g):
        gk = g if keepdims else np.expand_dims(g, axis)
        zero = out == 0
        if np.any(zero & (gk != 0)):
            raise DegenerateGradientError("l2norm gradient undefined at the zero vector")
        safe = np.where(zero, 1, out)
        _accum(a, gk * a.data / safe)

    res = out if keepdims else np.squeeze(out, axis)
    return _make(res, (a,), bw, "l2norm")


# --- linear algebra and shape ---------------------------------------------

def matmul(a, b):
    a, b = _pair(a, b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError("matmul operands must be at least 2-D")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")

    def bw(g):
        if a.requires_grad:
            _accum(a, g @ np.swapaxes(b.data, -1, -2))
        if b.requires_grad:
            _accum(b, np.swapaxes(a.data, -1, -2) @ g)

    return _make(a.data @ b.data, (a, b), bw, "matmul")


def concat(tensors, axis=-1):
    ts = [_as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in ts], axis=axis)
    sizes = np.cumsum([t.shape[axis] for t in ts])[:-1]

    def bw(g):
        for t, piece in zip(ts, np.split(g, sizes, axis=axis)):
            _accum(t, piece)

    return _make(out, tuple(ts), bw, "concat")


def reshape(a, shape):
    a = _as_tensor(a)
    return _make(a.data.reshape(shape), (a,), lambda g: _accum(a, g.reshape(a.shape)), "reshape")


def transpose(a, axes=None):
    a = _as_tensor(a)
    if axes is None:
        axes = tuple(range(a.ndim - 2)) + (a.ndim - 1, a.ndim - 2)
    inv = np.argsort(axes)
    return _make(np.transpose(a.data, axes), (a,),
                 lambda g: _accum(a, np.transpose(g, inv)), "transpose")


def getitem(a, idx):
    a = _as_tensor(a)

    basic = _is_basic_index(idx)

    def bw(g):
        full = np.zeros_like(a.data)
        if basic:
            full[idx] += g
        else:
            np.add.at(full, idx, g)
        _accum(a, full)

    return _make(np.array(a.data[idx]), (a,), bw, "getitem")


def cross(a, b):
    """Cross product over the last axis (length 3)."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape[-1] != 3 or b.shape[-1] != 3:
        raise DimensionError("cross needs vectors of length 3 on the last axis")

    def bw(g):
        # d(a x b) = da x b + a x db ; adjoints: ga = b x g, gb = g x a
        if a.requires_grad:
            _accum(a, np.cross(b.data, g))
        if b.requires_grad:
            _accum(b, np.cross(g, a.data))

    return _make(np.cross(a.data, b.data), (a, b), bw, "cross")
