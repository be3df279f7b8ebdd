"""Dense float64 tensors with reverse-mode gradient accumulation.

Every operation builds a node that remembers its parents and a closure that
pushes the upstream gradient back to them. ``backward`` walks the graph in
reverse topological order. Gradients accumulate until ``zero_grad`` is called;
the training loop owns that reset.

Binary elementwise ops require equal shapes. The only implicit broadcast is a
bias add, ``add(x, b)`` with ``b.shape == x.shape[-1:]``. Plain Python numbers
are accepted as constants in arithmetic. ``matmul`` follows numpy's batched
semantics so a constant ``[n, n]`` graph matrix can left-multiply a batch.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from ..errors import NumericError, ShapeError

# Op names whose backward rule is deliberately sign-flipped; used only by the
# gradient-check negative controls.
_FAULTS: set[str] = set()


def _as_array(values) -> np.ndarray:
    # np.ascontiguousarray would promote 0-d arrays to shape (1,)
    return np.array(values, dtype=np.float64, copy=True, order="C")


def _check_finite(arr: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite value produced by {op!r}")


class Tensor:
    __slots__ = ("values", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, values, requires_grad: bool = False, *, _op: str = "leaf", _copy: bool = True):
        arr = _as_array(values) if _copy else values
        _check_finite(arr, _op)
        self.values: np.ndarray = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self.op = _op

    # -- basic protocol ---------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def size(self) -> int:
        return self.values.size

    def numpy(self) -> np.ndarray:
        return self.values.copy()

    def item(self) -> float:
        if self.values.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {self.shape}")
        return float(self.values.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.values, requires_grad=False)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad = self.grad + g

    # -- operators --------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division by a Tensor is not supported")
        return mul(self, 1.0 / float(other))

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def tanh(self):
        return tanh(self)

    def sigmoid(self):
        return sigmoid(self)

    def relu(self):
        return relu(self)

    def exp(self):
        return exp(self)

    def abs(self):
        return absolute(self)

    def sum(self, axis=None):
        return tsum(self, axis)

    def mean(self):
        return mean(self)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    @property
    def T(self):
        if self.ndim != 2:
            raise ShapeError(f".T needs a matrix, got shape {self.shape}")
        return transpose(self, (1, 0))

    # -- reverse pass -----------------------------------------------------

    def backward(self) -> None:
        """Populate ``grad`` on every tracked ancestor of this scalar."""
        if self.values.size != 1:
            raise ShapeError(f"backward() needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            raise ValueError("loss does not depend on any tracked tensor")
        order = _topological(self)
        pending: dict[int, np.ndarray] = {id(self): np.ones_like(self.values)}
        for node in reversed(order):
            g = pending.pop(id(node), None)
            if g is None:
                continue
            node._accumulate(g)
            if node._backward is None:
                continue
            upstream = -g if node.op in _FAULTS else g
            for parent, pg in zip(node._parents, node._backward(upstream)):
                if pg is None or not parent.requires_grad:
                    continue
                prev = pending.get(id(parent))
                pending[id(parent)] = pg if prev is None else prev + pg


def _topological(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def _node(values: np.ndarray, parents: Sequence[Tensor], backward, op: str) -> Tensor:
    out = Tensor(values, _op=op, _copy=False)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def apply_op(values, parents: Sequence[Tensor], backward, op: str = "custom") -> Tensor:
    """Register a user-defined op.

    ``backward`` receives the upstream gradient and returns one gradient per
    parent (``None`` for parents that receive nothing).
    """
    return _node(np.array(values, dtype=np.float64, order="C"), parents, backward, op)


def tensor(values, requires_grad: bool = False) -> Tensor:
    return Tensor(values, requires_grad=requires_grad)


def constant(values) -> Tensor:
    return values if isinstance(values, Tensor) else Tensor(values)


def _is_scalar(x) -> bool:
    return isinstance(x, (int, float, np.floating, np.integer))


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# -- binary arithmetic ------------------------------------------------------


def add(a, b) -> Tensor:
    if _is_scalar(b):
        a, b = constant(a), float(b)
        return _node(a.values + b, (a,), lambda g: (g,), "add")
    if _is_scalar(a):
        return add(b, a)
    a, b = constant(a), constant(b)
    if a.shape == b.shape:
        return _node(a.values + b.values, (a, b), lambda g: (g, g), "add")
    if b.ndim == 1 and a.ndim >= 1 and a.shape[-1:] == b.shape:
        axes = tuple(range(a.ndim - 1))
        return _node(a.values + b.values, (a, b), lambda g: (g, g.sum(axis=axes)), "add")
    raise ShapeError(f"add: shape mismatch {a.shape} vs {b.shape} (only last-axis bias broadcast allowed)")


def sub(a, b) -> Tensor:
    if _is_scalar(a):
        b = constant(b)
        return _node(float(a) - b.values, (b,), lambda g: (-g,), "sub")
    if _is_scalar(b):
        a = constant(a)
        return _node(a.values - float(b), (a,), lambda g: (g,), "sub")
    a, b = constant(a), constant(b)
    _same_shape(a, b, "sub")
    return _node(a.values - b.values, (a, b), lambda g: (g, -g), "sub")


def mul(a, b) -> Tensor:
    """Hadamard product (or scaling by a Python number)."""
    if _is_scalar(a):
        a, b = b, a
    if _is_scalar(b):
        a, c = constant(a), float(b)
        return _node(a.values * c, (a,), lambda g: (g * c,), "mul")
    a, b = constant(a), constant(b)
    _same_shape(a, b, "mul")
    av, bv = a.values, b.values
    return _node(av * bv, (a, b), lambda g: (g * bv, g * av), "mul")


def matmul(a, b) -> Tensor:
    a, b = constant(a), constant(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    try:
        out = np.matmul(a.values, b.values)
    except ValueError as exc:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}") from exc
    av, bv = a.values, b.values

    def backward(g):
        ga = _unbroadcast(np.matmul(g, np.swapaxes(bv, -1, -2)), av.shape) if a.requires_grad else None
        gb = _unbroadcast(np.matmul(np.swapaxes(av, -1, -2), g), bv.shape) if b.requires_grad else None
        return ga, gb

    return _node(out, (a, b), backward, "matmul")


# -- unary elementwise ------------------------------------------------------


def tanh(x) -> Tensor:
    x = constant(x)
    y = np.tanh(x.values)
    return _node(y, (x,), lambda g: (g * (1.0 - y * y),), "tanh")


def sigmoid(x) -> Tensor:
    x = constant(x)
    v = x.values
    # split by sign so neither branch overflows in exp
    y = np.empty_like(v)
    pos = v >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    y[~pos] = ev / (1.0 + ev)
    return _node(y, (x,), lambda g: (g * y * (1.0 - y),), "sigmoid")


def relu(x) -> Tensor:
    x = constant(x)
    mask = x.values > 0
    return _node(np.where(mask, x.values, 0.0), (x,), lambda g: (g * mask,), "relu")


def exp(x) -> Tensor:
    x = constant(x)
    with np.errstate(over="ignore"):
        y = np.exp(x.values)
    return _node(y, (x,), lambda g: (g * y,), "exp")


def absolute(x) -> Tensor:
    """|x| with subgradient 0 at the kink."""
    x = constant(x)
    s = np.sign(x.values)
    return _node(np.abs(x.values), (x,), lambda g: (g * s,), "abs")


_UNARY = {"tanh": tanh, "sigmoid": sigmoid, "relu": relu, "exp": exp, "abs": absolute}
_BINARY = {"add": add, "sub": sub, "mul": mul}


def elementwise(op_tag: str, *operands) -> Tensor:
    """Dispatch an elementwise op by name (``concat`` joins along the last axis)."""
    if op_tag in _UNARY:
        (x,) = operands
        return _UNARY[op_tag](x)
    if op_tag in _BINARY:
        a, b = operands
        return _BINARY[op_tag](a, b)
    if op_tag == "concat":
        return concat(operands, axis=-1)
    raise ValueError(f"unknown elementwise op {op_tag!r}")


# -- reductions and shape ops -----------------------------------------------


def tsum(x, axis=None) -> Tensor:
    x = constant(x)
    shape = x.shape
    out = np.sum(x.values, axis=axis)

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return _node(np.asarray(out, dtype=np.float64), (x,), backward, "sum")


def mean(x) -> Tensor:
    x = constant(x)
    n = x.size
    shape = x.shape
    return _node(np.asarray(x.values.mean()), (x,), lambda g: (np.full(shape, float(g) / n),), "mean")


def reshape(x, shape) -> Tensor:
    x = constant(x)
    old = x.shape
    try:
        out = x.values.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"reshape: cannot view {old} as {tuple(shape)}") from exc
    return _node(out.copy(), (x,), lambda g: (g.reshape(old),), "reshape")


def transpose(x, axes=None) -> Tensor:
    x = constant(x)
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    inv = tuple(np.argsort(axes))
    out = np.array(np.transpose(x.values, axes), order="C")
    return _node(out, (x,), lambda g: (np.transpose(g, inv),), "transpose")


def getitem(x, index) -> Tensor:
    x = constant(x)
    shape = x.shape
    out = np.array(x.values[index], dtype=np.float64, order="C")

    parts = index if isinstance(index, tuple) else (index,)
    basic = all(isinstance(i, (int, np.integer, slice)) or i is None or i is Ellipsis for i in parts)

    def backward(g):
        full = np.zeros(shape)
        if basic:
            full[index] = g
        else:
            np.add.at(full, index, g)
        return (full,)

    return _node(out, (x,), backward, "getitem")


def concat(tensors: Iterable, axis: int = -1) -> Tensor:
    ts = [constant(t) for t in tensors]
    if not ts:
        raise ShapeError("concat of an empty sequence")
    nd = ts[0].ndim
    ax = axis % nd
    for t in ts[1:]:
        if t.ndim != nd or t.shape[:ax] + t.shape[ax + 1:] != ts[0].shape[:ax] + ts[0].shape[ax + 1:]:
            raise ShapeError(f"concat: incompatible shapes {[t.shape for t in ts]}")
    out = np.concatenate([t.values for t in ts], axis=ax)
    bounds = np.cumsum([t.shape[ax] for t in ts])[:-1]
    return _node(out, ts, lambda g: tuple(np.split(g, bounds, axis=ax)), "concat")


def stack(tensors: Iterable, axis: int = 0) -> Tensor:
    ts = [constant(t) for t in tensors]
    if not ts:
        raise ShapeError("stack of an empty sequence")
    for t in ts[1:]:
        _same_shape(ts[0], t, "stack")
    out = np.stack([t.values for t in ts], axis=axis)
    ax = axis % out.ndim
    return _node(out, ts, lambda g: tuple(np.moveaxis(g, ax, 0)), "stack")


def softmax(x, axis: int = -1) -> Tensor:
    """Max-shifted softmax along ``axis``."""
    x = constant(x)
    if not -x.ndim <= axis < x.ndim:
        raise ShapeError(f"softmax: axis {axis} out of range for shape {x.shape}")
    z = x.values - x.values.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _node(y, (x,), backward, "softmax")


def softmax_over_axis(x, axis: int) -> Tensor:
    return softmax(x, axis)


def zero_grad(tensors: Iterable[Tensor]) -> None:
    for t in tensors:
        t.zero_grad()
