"""Reverse-mode automatic differentiation over dense float64 tensors.

A Tape records primitive applications in creation order, which is a
topological order by construction, so backward() is a single reversed
sweep. Tensors are immutable once created; parameters are leaves with
requires_grad=True. Everything is float64.

Broadcasting note: add/sub/mul/matmul follow numpy broadcasting and the
backward pass sums gradients over broadcast axes. The contract only
promises scalar-tensor broadcasting; the general rule is used internally
for bias terms and per-edge gating.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError, DimensionError, DomainError, NumericError

_UNARY = {"tanh", "sigmoid", "softplus", "exp", "log", "relu", "elu"}


class Tape:
    """Ordered record of primitive applications for one forward pass."""

    __slots__ = ("nodes", "leaves")

    def __init__(self):
        self.nodes = []
        self.leaves = []

    def leaf(self, value, name=None, requires_grad=False):
        t = Tensor(np.asarray(value, dtype=np.float64), tape=self,
                   requires_grad=requires_grad, name=name)
        self.nodes.append(t)
        self.leaves.append(t)
        return t


class Tensor:
    __slots__ = ("value", "tape", "op", "parents", "kw", "name",
                 "requires_grad", "needs_grad")

    def __init__(self, value, tape=None, op=None, parents=(), kw=None,
                 requires_grad=False, name=None):
        self.value = value
        self.tape = tape
        self.op = op
        self.parents = parents
        self.kw = kw
        self.name = name
        self.requires_grad = requires_grad
        self.needs_grad = requires_grad or any(p.needs_grad for p in parents)

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Tensor(op={self.op or 'leaf'}, shape={self.value.shape})"

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


def constant(value):
    """Wrap an array or scalar as a non-differentiable tensor."""
    return Tensor(np.asarray(value, dtype=np.float64))


def _as_tensor(x):
    return x if isinstance(x, Tensor) else constant(x)


def _record(op, value, parents, kw=None):
    s = value.sum()
    if not np.isfinite(s) and not np.all(np.isfinite(value)):
        raise NumericError(f"primitive '{op}' produced non-finite values")
    tape = None
    for p in parents:
        if p.tape is not None:
            if tape is not None and tape is not p.tape:
                raise ContractError("operands belong to different tapes")
            tape = p.tape
    t = Tensor(value, tape=tape, op=op, parents=parents, kw=kw)
    if tape is not None:
        tape.nodes.append(t)
    return t


# ---------------------------------------------------------------------------
# primitives

def matmul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.value.ndim < 2 or b.value.ndim < 2:
        raise DimensionError("matmul operands must have ndim >= 2")
    if a.value.shape[-1] != b.value.shape[-2]:
        raise DimensionError(
            f"matmul inner dimensions differ: {a.value.shape} @ {b.value.shape}")
    return _record("matmul", np.matmul(a.value, b.value), (a, b))


def _ew(op, a, b, fn):
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        value = fn(a.value, b.value)
    except ValueError as e:
        raise DimensionError(f"{op}: incompatible shapes "
                             f"{a.value.shape} vs {b.value.shape}") from e
    return _record(op, value, (a, b))


def add(a, b):
    return _ew("add", a, b, np.add)


def sub(a, b):
    return _ew("sub", a, b, np.subtract)


def mul(a, b):
    return _ew("mul", a, b, np.multiply)


def concat(parts, axis):
    parts = tuple(_as_tensor(p) for p in parts)
    if not parts:
        raise ContractError("concat of zero tensors")
    try:
        value = np.concatenate([p.value for p in parts], axis=axis)
    except ValueError as e:
        raise DimensionError(f"concat: {e}") from e
    return _record("concat", value, parts, kw={"axis": axis})


def reduce_sum(x, axis=None, keepdims=False):
    x = _as_tensor(x)
    return _record("sum", np.sum(x.value, axis=axis, keepdims=keepdims),
                   (x,), kw={"axis": axis, "keepdims": keepdims})


def tanh(x):
    x = _as_tensor(x)
    return _record("tanh", np.tanh(x.value), (x,))


def sigmoid(x):
    x = _as_tensor(x)
    v = x.value
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    e = np.exp(v[~pos])
    out[~pos] = e / (1.0 + e)
    return _record("sigmoid", out, (x,))


def softplus(x):
    x = _as_tensor(x)
    v = x.value
    out = np.maximum(v, 0.0) + np.log1p(np.exp(-np.abs(v)))
    return _record("softplus", out, (x,))


def exp(x):
    x = _as_tensor(x)
    return _record("exp", np.exp(x.value), (x,))


def log(x):
    x = _as_tensor(x)
    if np.any(x.value <= 0):
        raise DomainError("log requires strictly positive inputs")
    return _record("log", np.log(x.value), (x,))


def power(base, expo):
    base, expo = _as_tensor(base), _as_tensor(expo)
    if np.any(base.value <= 0):
        raise DomainError("pow requires strictly positive base")
    try:
        value = np.power(base.value, expo.value)
    except ValueError as e:
        raise DimensionError(f"pow: incompatible shapes "
                             f"{base.value.shape} vs {expo.value.shape}") from e
    return _record("pow", value, (base, expo))


def softmax(x, axis=-1):
    x = _as_tensor(x)
    v = x.value - np.max(x.value, axis=axis, keepdims=True)
    e = np.exp(v)
    return _record("softmax", e / e.sum(axis=axis, keepdims=True),
                   (x,), kw={"axis": axis})


def relu(x):
    x = _as_tensor(x)
    return _record("relu", np.maximum(x.value, 0.0), (x,))


def elu(x):
    x = _as_tensor(x)
    v = x.value
    return _record("elu", np.where(v > 0, v, np.expm1(np.minimum(v, 0.0))), (x,))


def reshape(x, shape):
    x = _as_tensor(x)
    try:
        value = x.value.reshape(shape)
    except ValueError as e:
        raise DimensionError(f"reshape: {e}") from e
    return _record("reshape", value, (x,), kw={"shape": x.value.shape})


def take(x, index, axis):
    """Select one slice along an axis; the inverse scatter-adds on backward."""
    x = _as_tensor(x)
    idx = (slice(None),) * axis + (index,)
    return _record("take", x.value[idx], (x,), kw={"idx": idx})


def narrow(x, axis, start, length):
    """Contiguous slice [start, start+length) along an axis."""
    x = _as_tensor(x)
    idx = (slice(None),) * axis + (slice(start, start + length),)
    return _record("take", x.value[idx], (x,), kw={"idx": idx})


_PRIMS = {
    "matmul": matmul, "add": add, "sub": sub, "elementwise-mul": mul,
    "mul": mul, "concat": concat, "sum": reduce_sum, "tanh": tanh,
    "sigmoid": sigmoid, "softplus": softplus, "exp": exp, "log": log,
    "pow": power, "softmax": softmax, "relu": relu, "elu": elu,
    "reshape": reshape, "take": take, "narrow": narrow,
}


def apply(kind, operands, **kw):
    """Uniform entry point over the primitive table."""
    if kind not in _PRIMS:
        raise ContractError(f"unknown primitive kind '{kind}'")
    fn = _PRIMS[kind]
    if kind == "concat":
        return fn(operands, **kw)
    if kind in _UNARY or kind in ("sum", "reshape", "take", "narrow"):
        (x,) = operands
        return fn(x, **kw)
    a, b = operands
    return fn(a, b, **kw)


# ---------------------------------------------------------------------------
# backward

def _unbroadcast(g, shape):
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _swap(v):
    return np.swapaxes(v, -1, -2)


def _own(grads, key):
    prev = grads[key]
    if prev.base is not None or not prev.flags.writeable:
        prev = prev.copy()
        grads[key] = prev
    return prev


def _accum(grads, parent, contrib):
    if not parent.needs_grad:
        return
    key = id(parent)
    if key in grads:
        prev = _own(grads, key)
        prev += contrib
    else:
        grads[key] = contrib


def _scatter(grads, parent, idx, g):
    if not parent.needs_grad:
        return
    key = id(parent)
    if key in grads:
        buf = _own(grads, key)
    else:
        buf = np.zeros(parent.value.shape)
        grads[key] = buf
    buf[idx] += g


def _backward_node(node, g, grads):
    op = node.op
    if op == "matmul":
        a, b = node.parents
        if a.needs_grad:
            _accum(grads, a, _unbroadcast(np.matmul(g, _swap(b.value)), a.value.shape))
        if b.needs_grad:
            _accum(grads, b, _unbroadcast(np.matmul(_swap(a.value), g), b.value.shape))
    elif op == "add":
        a, b = node.parents
        _accum(grads, a, _unbroadcast(g, a.value.shape))
        _accum(grads, b, _unbroadcast(g, b.value.shape))
    elif op == "sub":
        a, b = node.parents
        _accum(grads, a, _unbroadcast(g, a.value.shape))
        _accum(grads, b, _unbroadcast(-g, b.value.shape))
    elif op == "mul":
        a, b = node.parents
        if a.needs_grad:
            _accum(grads, a, _unbroadcast(g * b.value, a.value.shape))
        if b.needs_grad:
            _accum(grads, b, _unbroadcast(g * a.value, b.value.shape))
    elif op == "concat":
        axis = node.kw["axis"]
        offset = 0
        for p in node.parents:
            n = p.value.shape[axis]
            idx = (slice(None),) * (axis % g.ndim) + (slice(offset, offset + n),)
            _accum(grads, p, g[idx])
            offset += n
    elif op == "sum":
        (x,) = node.parents
        axis, keepdims = node.kw["axis"], node.kw["keepdims"]
        if axis is not None and not keepdims:
            axes = (axis,) if isinstance(axis, int) else axis
            for ax in sorted(a % x.value.ndim for a in axes):
                g = np.expand_dims(g, ax)
        _accum(grads, x, np.broadcast_to(g, x.value.shape))
    elif op == "tanh":
        _accum(grads, node.parents[0], g * (1.0 - node.value ** 2))
    elif op == "sigmoid":
        y = node.value
        _accum(grads, node.parents[0], g * y * (1.0 - y))
    elif op == "softplus":
        _accum(grads, node.parents[0],
               g / (1.0 + np.exp(-node.parents[0].value)))
    elif op == "exp":
        _accum(grads, node.parents[0], g * node.value)
    elif op == "log":
        _accum(grads, node.parents[0], g / node.parents[0].value)
    elif op == "pow":
        base, expo = node.parents
        if base.needs_grad:
            _accum(grads, base, _unbroadcast(
                g * node.value * expo.value / base.value, base.value.shape))
        if expo.needs_grad:
            _accum(grads, expo, _unbroadcast(
                g * node.value * np.log(base.value), expo.value.shape))
    elif op == "softmax":
        y = node.value
        axis = node.kw["axis"]
        _accum(grads, node.parents[0],
               y * (g - np.sum(g * y, axis=axis, keepdims=True)))
    elif op == "relu":
        _accum(grads, node.parents[0], g * (node.parents[0].value > 0))
    elif op == "elu":
        v = node.parents[0].value
        _accum(grads, node.parents[0], g * np.where(v > 0, 1.0, node.value + 1.0))
    elif op == "reshape":
        _accum(grads, node.parents[0], g.reshape(node.kw["shape"]))
    elif op == "take":
        _scatter(grads, node.parents[0], node.kw["idx"], g)
    else:  # pragma: no cover
        raise ContractError(f"no backward rule for '{op}'")


def backward(loss, tape=None):
    """Gradients of a scalar loss w.r.t. every requires_grad leaf on its tape.

    Returns a GradientMap: dict mapping leaf Tensor -> ndarray of the same
    shape. Leaves the loss does not depend on get zero gradients.
    """
    if loss.value.shape != ():
        raise ContractError("backward requires a scalar loss")
    if tape is None:
        tape = loss.tape
    if tape is None:
        raise ContractError("loss is not attached to a tape")
    grads = {id(loss): np.ones(())}
    for node in reversed(tape.nodes):
        if node.op is None or not node.needs_grad:
            continue
        g = grads.pop(id(node), None)
        if g is None:
            continue
        _backward_node(node, g, grads)
    out = {}
    for leaf in tape.leaves:
        if leaf.requires_grad:
            g = grads.get(id(leaf))
            out[leaf] = np.zeros(leaf.value.shape) if g is None else np.asarray(g)
    return out


def glorot_uniform(rng, fan_in, fan_out, shape=None):
    """Uniform init in +-sqrt(6/(fan_in+fan_out))."""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    if shape is None:
        shape = (fan_in, fan_out)
    return rng.uniform(-limit, limit, size=shape)
