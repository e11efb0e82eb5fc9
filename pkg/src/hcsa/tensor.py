"""Dense float64 tensors with reverse-mode automatic differentiation.

Every differentiable operation returns a new :class:`Tensor` that remembers
its parents and a closure mapping the output gradient to parent gradients.
Each tensor also carries a global creation index, so the set of nodes
reachable from a loss, sorted by that index, is exactly the execution tape.
:func:`backward` walks it in reverse.

Broadcasting is deliberately limited to python scalars and identical shapes.
Row/column replication is an explicit op (:func:`expand`) so gradient routing
is always visible at the call site.
"""

from __future__ import annotations

import itertools
import threading
from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DimensionError, NonFiniteError

_creation = itertools.count()
_state = threading.local()


def _grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextmanager
def no_grad():
    """Disable graph recording in the current thread."""
    prev = _grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


def _check_finite(arr: np.ndarray) -> None:
    # NaN/Inf propagate into the sum; the full scan only runs on suspicion
    if not np.isfinite(arr.sum()) and not np.isfinite(arr).all():
        raise NonFiniteError(f"non-finite value in tensor of shape {arr.shape}")


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name", "_parents", "_backward", "_order")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.array(data, dtype=np.float64)
        _check_finite(arr)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(arr) if requires_grad else None
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None
        self._order = next(_creation)

    @classmethod
    def _result(cls, data: np.ndarray, parents: Sequence["Tensor"], backward: Callable) -> "Tensor":
        _check_finite(data)
        out = cls.__new__(cls)
        out.data = data
        out.name = None
        out.grad = None
        out._order = next(_creation)
        if _grad_enabled() and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        else:
            out.requires_grad = False
            out._parents = ()
            out._backward = None
        return out

    # -- conveniences -----------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_as_tensor(other, self), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self, axis=None) -> "Tensor":
        return sum_(self, axis)

    def mean(self, axis=None) -> "Tensor":
        return mean(self, axis)


def _as_tensor(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    if np.ndim(x) == 0:
        return Tensor(float(x))
    return Tensor(x)


# -- tape ---------------------------------------------------------------------

def tape(loss: Tensor) -> list[Tensor]:
    """Recorded operations reachable from ``loss``, in execution order."""
    seen: set[int] = set()
    nodes: list[Tensor] = []
    stack = [loss]
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        if node._backward is not None:
            nodes.append(node)
            stack.extend(node._parents)
    nodes.sort(key=lambda n: n._order)
    return nodes


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` of every requires_grad tensor reachable from ``loss``.

    Leaf gradients accumulate across calls; intermediate gradients are
    overwritten on each call.
    """
    if loss.data.size != 1:
        raise DimensionError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    pending: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    if loss._backward is None:
        loss.grad += pending[id(loss)]
        return
    for node in reversed(tape(loss)):
        g = pending.pop(id(node), None)
        if g is None:
            continue
        node.grad = g
        parent_grads = node._backward(g)
        for parent, pg in zip(node._parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            if parent._backward is None:
                parent.grad += pg
            elif id(parent) in pending:
                pending[id(parent)] = pending[id(parent)] + pg
            else:
                pending[id(parent)] = pg


# -- elementwise ----------------------------------------------------------------

def _binary_operands(a, b) -> tuple[Tensor, Tensor]:
    if not isinstance(a, Tensor):
        a = _as_tensor(a, b)
    if not isinstance(b, Tensor):
        b = _as_tensor(b, a)
    if a.shape != b.shape and a.data.ndim != 0 and b.data.ndim != 0:
        raise DimensionError(f"shapes {a.shape} and {b.shape} differ; use expand() explicitly")
    return a, b


def _reduce_to(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    return np.asarray(g.sum()).reshape(shape)


def add(a, b) -> Tensor:
    a, b = _binary_operands(a, b)
    sa, sb = a.shape, b.shape
    return Tensor._result(a.data + b.data, (a, b), lambda g: (_reduce_to(g, sa), _reduce_to(g, sb)))


def sub(a, b) -> Tensor:
    a, b = _binary_operands(a, b)
    sa, sb = a.shape, b.shape
    return Tensor._result(a.data - b.data, (a, b), lambda g: (_reduce_to(g, sa), _reduce_to(-g, sb)))


def mul(a, b) -> Tensor:
    a, b = _binary_operands(a, b)
    ad, bd = a.data, b.data
    return Tensor._result(
        ad * bd, (a, b), lambda g: (_reduce_to(g * bd, ad.shape), _reduce_to(g * ad, bd.shape))
    )


def neg(a: Tensor) -> Tensor:
    return Tensor._result(-a.data, (a,), lambda g: (-g,))


def sigmoid(a: Tensor) -> Tensor:
    y = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return Tensor._result(y, (a,), lambda g: (g * y * (1.0 - y),))


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    return Tensor._result(y, (a,), lambda g: (g * (1.0 - y * y),))


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)
    return Tensor._result(y, (a,), lambda g: (g * y,))


def log(a: Tensor) -> Tensor:
    x = a.data
    with np.errstate(divide="ignore", invalid="ignore"):
        y = np.log(x)
    return Tensor._result(y, (a,), lambda g: (g / x,))


_UNARY = {"sigmoid": sigmoid, "tanh": tanh, "exp": exp, "log": log, "neg": neg}
_BINARY = {"add": add, "sub": sub, "mul": mul}


def elementwise(op: str, *inputs) -> Tensor:
    """Dispatch by name: ``elementwise("mul", a, b)``, ``elementwise("tanh", x)``."""
    if op in _UNARY:
        (x,) = inputs
        return _UNARY[op](x)
    if op in _BINARY:
        a, b = inputs
        return _BINARY[op](a, b)
    raise ValueError(f"unknown elementwise op {op!r}")


# -- linear algebra -----------------------------------------------------------------

def _swap_last(x: np.ndarray) -> np.ndarray:
    return np.swapaxes(x, -1, -2)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """``a @ b`` for a (..., n, k) with either a shared k x m matrix or a same-batch (..., k, m)."""
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise DimensionError(f"matmul needs operands of rank >= 2, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data
    if bd.ndim == 2:
        k, m = bd.shape

        def grad(g):
            return g @ bd.T, ad.reshape(-1, k).T @ g.reshape(-1, m)

    elif ad.shape[:-2] == bd.shape[:-2]:

        def grad(g):
            return g @ _swap_last(bd), _swap_last(ad) @ g

    else:
        raise DimensionError(f"matmul batch dimensions differ: {a.shape} @ {b.shape}")
    return Tensor._result(ad @ bd, (a, b), grad)


def transpose(a: Tensor) -> Tensor:
    """Swap the last two axes."""
    if a.data.ndim < 2:
        raise DimensionError(f"transpose needs rank >= 2, got {a.shape}")
    return Tensor._result(np.ascontiguousarray(_swap_last(a.data)), (a,), lambda g: (_swap_last(g),))


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    src = a.shape
    return Tensor._result(a.data.reshape(shape), (a,), lambda g: (g.reshape(src),))


# -- reductions and normalisation ---------------------------------------------------

def _norm_axis(axis: int, ndim: int) -> int:
    if not -ndim <= axis < ndim:
        raise DimensionError(f"axis {axis} out of range for {ndim}-D tensor")
    return axis % ndim


def sum_(a: Tensor, axis: int | None = None) -> Tensor:
    src = a.shape
    if axis is None:
        return Tensor._result(np.asarray(a.data.sum()), (a,), lambda g: (np.full(src, float(g)),))
    ax = _norm_axis(axis, a.data.ndim)
    return Tensor._result(
        a.data.sum(axis=ax),
        (a,),
        lambda g: (np.broadcast_to(np.expand_dims(g, ax), src).copy(),),
    )


def mean(a: Tensor, axis: int | None = None) -> Tensor:
    if axis is None:
        n = a.data.size
    else:
        n = a.shape[_norm_axis(axis, a.data.ndim)]
    return mul(sum_(a, axis), 1.0 / n)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    ax = _norm_axis(axis, a.data.ndim)
    if a.shape[ax] < 1:
        raise DimensionError("softmax over an empty axis")
    z = np.exp(a.data - a.data.max(axis=ax, keepdims=True))
    y = z / z.sum(axis=ax, keepdims=True)
    return Tensor._result(y, (a,), lambda g: (y * (g - (g * y).sum(axis=ax, keepdims=True)),))


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    ax = _norm_axis(axis, a.data.ndim)
    shifted = a.data - a.data.max(axis=ax, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=ax, keepdims=True))
    y = shifted - lse

    def grad(g):
        return (g - np.exp(y) * g.sum(axis=ax, keepdims=True),)

    return Tensor._result(y, (a,), grad)


def _segment_view(x: np.ndarray, size: int, fill: float) -> np.ndarray:
    # segmented axis first
    n = x.shape[0]
    n_seg = -(-n // size)
    pad = n_seg * size - n
    if pad:
        x = np.concatenate([x, np.full((pad,) + x.shape[1:], fill)], axis=0)
    return x.reshape((n_seg, size) + x.shape[1:])


def segment_softmax(a: Tensor, size: int, axis: int = 0) -> Tensor:
    """Softmax within consecutive blocks of ``size`` entries along ``axis``.

    A trailing block shorter than ``size`` normalises over its own entries.
    """
    if size < 1:
        raise DimensionError("segment size must be >= 1")
    ax = _norm_axis(axis, a.data.ndim)
    x = np.moveaxis(a.data, ax, 0)
    n, rest = x.shape[0], x.shape[1:]
    blocks = _segment_view(x, size, -np.inf)
    z = np.exp(blocks - blocks.max(axis=1, keepdims=True))
    yb = z / z.sum(axis=1, keepdims=True)
    y = np.moveaxis(yb.reshape((-1,) + rest)[:n], 0, ax)

    def grad(g):
        gb = _segment_view(np.moveaxis(g, ax, 0), size, 0.0)
        gx = yb * (gb - (gb * yb).sum(axis=1, keepdims=True))
        return (np.moveaxis(gx.reshape((-1,) + rest)[:n], 0, ax),)

    return Tensor._result(np.ascontiguousarray(y), (a,), grad)


def segment_sum(a: Tensor, size: int, axis: int = 0) -> Tensor:
    """Sum consecutive blocks of ``size`` entries along ``axis``, which shrinks to ceil(n/size)."""
    if size < 1:
        raise DimensionError("segment size must be >= 1")
    ax = _norm_axis(axis, a.data.ndim)
    n = a.shape[ax]
    out = np.moveaxis(_segment_view(np.moveaxis(a.data, ax, 0), size, 0.0).sum(axis=1), 0, ax)
    index = (slice(None),) * ax + (slice(0, n),)
    return Tensor._result(
        np.ascontiguousarray(out), (a,), lambda g: (np.repeat(g, size, axis=ax)[index],)
    )


# -- structural ---------------------------------------------------------------------

def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise DimensionError("concat of an empty list")
    ndim = tensors[0].data.ndim
    ax = _norm_axis(axis, ndim)
    for t in tensors[1:]:
        if t.data.ndim != ndim or any(
            s != r for i, (s, r) in enumerate(zip(t.shape, tensors[0].shape)) if i != ax
        ):
            raise DimensionError(f"concat along axis {ax}: {tensors[0].shape} vs {t.shape}")
    bounds = np.cumsum([t.shape[ax] for t in tensors])[:-1]
    out = np.concatenate([t.data for t in tensors], axis=ax)
    return Tensor._result(out, tuple(tensors), lambda g: tuple(np.split(g, bounds, axis=ax)))


def slice_(a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    ax = _norm_axis(axis, a.data.ndim)
    if not 0 <= start <= stop <= a.shape[ax]:
        raise DimensionError(f"slice [{start}:{stop}] out of range for axis of length {a.shape[ax]}")
    index = (slice(None),) * ax + (slice(start, stop),)
    src = a.shape

    def grad(g):
        full = np.zeros(src)
        full[index] = g
        return (full,)

    return Tensor._result(a.data[index].copy(), (a,), grad)


def pad(a: Tensor, before: int, after: int, axis: int = 0) -> Tensor:
    """Zero entries prepended/appended along ``axis``."""
    ax = _norm_axis(axis, a.data.ndim)
    n = a.shape[ax]
    shape = list(a.shape)
    shape[ax] = n + before + after
    out = np.zeros(shape)
    index = (slice(None),) * ax + (slice(before, before + n),)
    out[index] = a.data
    return Tensor._result(out, (a,), lambda g: (g[index],))


def expand(a: Tensor, shape: Sequence[int]) -> Tensor:
    """Replicate size-1 axes of ``a`` up to ``shape``; gradients are summed back."""
    shape = tuple(shape)
    if a.data.ndim != len(shape) or any(s != 1 and s != t for s, t in zip(a.shape, shape)):
        raise DimensionError(f"cannot expand {a.shape} to {shape}")
    axes = tuple(i for i, (s, t) in enumerate(zip(a.shape, shape)) if s == 1 and t != 1)
    out = np.broadcast_to(a.data, shape)
    return Tensor._result(out, (a,), lambda g: (g.sum(axis=axes, keepdims=True),))


def take_rows(table: Tensor, ids) -> Tensor:
    """Embedding lookup; output shape is ``ids.shape + (width,)``."""
    idx = np.asarray(ids, dtype=np.int64)
    rows = table.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= rows):
        raise DimensionError(f"row index out of range for table with {rows} rows")

    def grad(g):
        full = np.zeros_like(table.data)
        np.add.at(full, idx, g)
        return (full,)

    return Tensor._result(table.data[idx], (table,), grad)


# -- finite differences ---------------------------------------------------------

def numerical_grad(f: Callable[[], float], param: Tensor, eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar ``f()`` with respect to ``param`` (in place)."""
    out = np.zeros_like(param.data)
    flat = param.data.reshape(-1)
    gflat = out.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        up = f()
        flat[i] = orig - eps
        down = f()
        flat[i] = orig
        gflat[i] = (up - down) / (2 * eps)
    return out


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-5) -> np.ndarray:
    """Elementwise |a-n| / max(|a|, |n|, floor)."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def check_gradients(
    f: Callable[[], Tensor], params: Iterable[Tensor], eps: float = 1e-5, floor: float = 1e-5
) -> float:
    """Worst relative error between backprop and central differences of ``f``."""
    params = list(params)
    for p in params:
        p.zero_grad()
    backward(f())
    analytic = [p.grad.copy() for p in params]

    def value() -> float:
        with no_grad():
            return f().item()

    worst = 0.0
    for p, a in zip(params, analytic):
        num = numerical_grad(value, p, eps)
        if a.size:
            worst = max(worst, float(relative_error(a, num, floor).max()))
    return worst
