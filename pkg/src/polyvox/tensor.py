"""Dense tensor arithmetic with reverse-mode differentiation.

Small, deterministic, CPU-only engine: every primitive runs through numpy
and, while a tape is active, records a node holding the backward closure.
``backward`` replays the tape in reverse execution order, which is always a
valid topological order, and accumulates gradients per tensor.

Precision is carried per tensor. Training defaults to float32; gradient
checks run the same code in float64 by constructing float64 parameters.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

DEFAULT_DTYPE = np.float32


class ShapeMismatch(ValueError):
    """Raised when operand shapes are invalid for a primitive."""

    def __init__(self, primitive: str, detail: str):
        super().__init__(f"{primitive}: {detail}")
        self.primitive = primitive


class Tensor:
    """A dense array plus the bookkeeping needed for reverse-mode autodiff.

    ``data`` is an ``np.ndarray`` and is treated as immutable once created,
    except for in-place parameter updates which must happen only between
    tape passes. ``requires_grad`` marks leaf parameters; ``needs_grad`` is
    true for any tensor on a differentiable path from a parameter.
    """

    __slots__ = ("data", "requires_grad", "needs_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None,
                 dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.requires_grad = requires_grad
        self.needs_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{tag})"

    # operator sugar; every overload routes through a recorded primitive
    def __add__(self, other):
        return add(self, _as_tensor(other, self))

    def __radd__(self, other):
        return add(_as_tensor(other, self), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other, self))

    def __rsub__(self, other):
        return sub(_as_tensor(other, self), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other, self))

    def __rmul__(self, other):
        return mul(_as_tensor(other, self), self)

    def __truediv__(self, other):
        return div(self, _as_tensor(other, self))

    def __rtruediv__(self, other):
        return div(_as_tensor(other, self), self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return neg(self)

    def __getitem__(self, key):
        return slice_(self, key)


def _as_tensor(value, like: Tensor) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=like.dtype))


class TapeNode:
    __slots__ = ("output", "inputs", "backward_fn")

    def __init__(self, output: Tensor, inputs: tuple[Tensor, ...],
                 backward_fn: Callable[[np.ndarray], Sequence[np.ndarray | None]]):
        self.output = output
        self.inputs = inputs
        self.backward_fn = backward_fn


class Tape:
    """Ordered record of executed primitives for one forward pass."""

    def __init__(self):
        self.nodes: list[TapeNode] = []

    def __len__(self) -> int:
        return len(self.nodes)


_ACTIVE_TAPE: Tape | None = None


@contextlib.contextmanager
def record():
    """Enable tape recording for the enclosed forward pass."""
    global _ACTIVE_TAPE
    prev = _ACTIVE_TAPE
    tape = Tape()
    _ACTIVE_TAPE = tape
    try:
        yield tape
    finally:
        _ACTIVE_TAPE = prev


def _emit(output: Tensor, inputs: tuple[Tensor, ...], backward_fn) -> Tensor:
    output.needs_grad = any(t.needs_grad for t in inputs)
    if _ACTIVE_TAPE is not None and output.needs_grad:
        _ACTIVE_TAPE.nodes.append(TapeNode(output, inputs, backward_fn))
    return output


def backward(loss: Tensor, tape: Tape,
             params: Iterable[Tensor] | None = None) -> dict[Tensor, np.ndarray]:
    """Accumulate d(loss)/d(param) for every parameter via the tape.

    ``loss`` must be scalar and recorded on ``tape``. Parameters not
    reachable from the loss receive an exact zero gradient. Accumulators are
    freshly zero-initialized per call; calling twice on the same tape yields
    identical results.
    """
    if loss.data.ndim != 0 and loss.data.size != 1:
        raise ValueError(f"backward: loss must be scalar, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=loss.dtype).reshape(loss.shape)}
    for node in reversed(tape.nodes):
        out_grad = grads.pop(id(node.output), None)
        if out_grad is None:
            continue
        input_grads = node.backward_fn(out_grad)
        for tensor, grad in zip(node.inputs, input_grads):
            if grad is None or not tensor.needs_grad:
                continue
            acc = grads.get(id(tensor))
            if acc is None:
                # always copy: closures may hand back views of the upstream
                # gradient (mutated in place below) or 0-d numpy scalars
                # (immutable, so += would silently rebind)
                grads[id(tensor)] = np.array(grad, copy=True)
            else:
                acc += grad
    result: dict[Tensor, np.ndarray] = {}
    if params is not None:
        for p in params:
            g = grads.get(id(p))
            result[p] = g if g is not None else np.zeros_like(p.data)
    return result


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (reverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _check_broadcast(primitive: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatch(primitive, f"cannot broadcast {a.shape} with {b.shape}") from None


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast("add", a, b)
    out = Tensor(a.data + b.data)
    return _emit(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast("sub", a, b)
    out = Tensor(a.data - b.data)
    return _emit(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast("mul", a, b)
    out = Tensor(a.data * b.data)
    return _emit(out, (a, b), lambda g: (_unbroadcast(g * b.data, a.shape),
                                         _unbroadcast(g * a.data, b.shape)))


def div(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast("div", a, b)
    out = Tensor(a.data / b.data)
    return _emit(out, (a, b), lambda g: (_unbroadcast(g / b.data, a.shape),
                                         _unbroadcast(-g * a.data / (b.data * b.data), b.shape)))


def neg(a: Tensor) -> Tensor:
    out = Tensor(-a.data)
    return _emit(out, (a,), lambda g: (-g,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim not in (1, 2) or b.ndim not in (1, 2):
        raise ShapeMismatch("matmul", f"only 1-D/2-D operands supported, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[0]:
        raise ShapeMismatch("matmul", f"inner dimensions differ: {a.shape} @ {b.shape}")
    out = Tensor(a.data @ b.data)

    def bwd(g):
        if a.ndim == 2 and b.ndim == 2:
            return g @ b.data.T, a.data.T @ g
        if a.ndim == 1 and b.ndim == 2:
            return g @ b.data.T, np.outer(a.data, g)
        if a.ndim == 2 and b.ndim == 1:
            return np.outer(g, b.data), a.data.T @ g
        # 1-D @ 1-D -> scalar
        return g * b.data, g * a.data

    return _emit(out, (a, b), bwd)


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    out = Tensor(y)
    return _emit(out, (a,), lambda g: (g * (1.0 - y * y),))


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    y = np.empty_like(x)
    pos = x >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    y[~pos] = ex / (1.0 + ex)
    out = Tensor(y)
    return _emit(out, (a,), lambda g: (g * y * (1.0 - y),))


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)
    out = Tensor(y)
    return _emit(out, (a,), lambda g: (g * y,))


def log(a: Tensor) -> Tensor:
    out = Tensor(np.log(a.data))
    return _emit(out, (a,), lambda g: (g / a.data,))


def softplus(a: Tensor) -> Tensor:
    # log(1 + e^x), computed stably
    out = Tensor(np.logaddexp(np.zeros((), dtype=a.dtype), a.data))
    x = a.data

    def bwd(g):
        s = np.empty_like(x)
        pos = x >= 0
        s[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        s[~pos] = ex / (1.0 + ex)
        return (g * s,)

    return _emit(out, (a,), bwd)


def relu(a: Tensor) -> Tensor:
    out = Tensor(np.maximum(a.data, 0))
    return _emit(out, (a,), lambda g: (g * (a.data > 0),))


def abs_(a: Tensor) -> Tensor:
    out = Tensor(np.abs(a.data))
    return _emit(out, (a,), lambda g: (g * np.sign(a.data),))


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    x = a.data
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(y)

    def bwd(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return ((g - dot) * y,)

    return _emit(out, (a,), bwd)


def conv1d(x: Tensor, w: Tensor, padding: int = 0) -> Tensor:
    """1-D convolution over time. ``x`` is (T, C_in), ``w`` is (k, C_in, C_out).

    Output is (T + 2*padding - k + 1, C_out). Zero padding on both ends.
    """
    if x.ndim != 2 or w.ndim != 3:
        raise ShapeMismatch("conv1d", f"expected (T, C_in) and (k, C_in, C_out), got {x.shape}, {w.shape}")
    k, c_in, c_out = w.shape
    if x.shape[1] != c_in:
        raise ShapeMismatch("conv1d", f"input channels {x.shape[1]} != kernel channels {c_in}")
    t = x.shape[0]
    t_out = t + 2 * padding - k + 1
    if t_out <= 0:
        raise ShapeMismatch("conv1d", f"kernel {k} too large for length {t} with padding {padding}")
    xp = np.zeros((t + 2 * padding, c_in), dtype=x.dtype)
    xp[padding:padding + t] = x.data
    windows = np.lib.stride_tricks.sliding_window_view(xp, k, axis=0)  # (t_out, c_in, k)
    cols = np.ascontiguousarray(windows.transpose(0, 2, 1)).reshape(t_out, k * c_in)
    w2 = w.data.reshape(k * c_in, c_out)
    out = Tensor(cols @ w2)

    def bwd(g):
        dw = (cols.T @ g).reshape(k, c_in, c_out)
        dcols = (g @ w2.T).reshape(t_out, k, c_in)
        dxp = np.zeros_like(xp)
        for j in range(k):
            dxp[j:j + t_out] += dcols[:, j, :]
        return dxp[padding:padding + t], dw

    return _emit(out, (x, w), bwd)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ShapeMismatch("concat", "empty tensor list")
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    sizes = [t.shape[axis] if t.ndim > 0 else 1 for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        return tuple(np.take(g, np.arange(offsets[i], offsets[i + 1]), axis=axis)
                     for i in range(len(tensors)))

    return _emit(out, tuple(tensors), bwd)


def slice_(a: Tensor, key) -> Tensor:
    out = Tensor(a.data[key])

    def bwd(g):
        full = np.zeros_like(a.data)
        full[key] = g
        return (full,)

    return _emit(out, (a,), bwd)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = Tensor(a.data.reshape(shape))
    return _emit(out, (a,), lambda g: (g.reshape(a.shape),))


def sum_(a: Tensor, axis=None) -> Tensor:
    out = Tensor(a.data.sum(axis=axis))

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).astype(a.dtype, copy=True),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).astype(a.dtype, copy=True),)

    return _emit(out, (a,), bwd)


def mean(a: Tensor, axis=None) -> Tensor:
    n = a.size if axis is None else a.shape[axis]
    out = Tensor(a.data.mean(axis=axis))

    def bwd(g):
        scaled = g / n
        if axis is None:
            return (np.broadcast_to(scaled, a.shape).astype(a.dtype, copy=True),)
        return (np.broadcast_to(np.expand_dims(scaled, axis), a.shape).astype(a.dtype, copy=True),)

    return _emit(out, (a,), bwd)


def gather_rows(table: Tensor, indices: np.ndarray) -> Tensor:
    """Row lookup (embedding). ``indices`` is a constant integer array."""
    idx = np.asarray(indices)
    if table.ndim != 2:
        raise ShapeMismatch("gather_rows", f"table must be 2-D, got {table.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise ShapeMismatch("gather_rows", f"index out of range for table with {table.shape[0]} rows")
    out = Tensor(table.data[idx])

    def bwd(g):
        full = np.zeros_like(table.data)
        np.add.at(full, idx, g)
        return (full,)

    return _emit(out, (table,), bwd)


PRIMITIVES = {
    "matmul": matmul,
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "neg": neg,
    "tanh": tanh,
    "sigmoid": sigmoid,
    "exp": exp,
    "log": log,
    "softplus": softplus,
    "relu": relu,
    "abs": abs_,
    "softmax": softmax,
    "conv1d": conv1d,
    "concat": concat,
    "slice": slice_,
    "reshape": reshape,
    "sum": sum_,
    "mean": mean,
    "gather_rows": gather_rows,
}


def forward_primitive(kind: str, inputs, **kwargs) -> Tensor:
    """Run one primitive by name; recorded on the active tape like any op.

    Variadic primitives (``concat``) take the input list whole; the rest
    are applied positionally.
    """
    fn = PRIMITIVES.get(kind)
    if fn is None:
        raise ShapeMismatch(kind, f"unknown primitive (have: {sorted(PRIMITIVES)})")
    if kind == "concat":
        return fn(list(inputs), **kwargs)
    return fn(*inputs, **kwargs)


def zeros(shape, dtype=DEFAULT_DTYPE) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype))


def uniform_init(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int,
                 dtype=DEFAULT_DTYPE, name: str | None = None) -> Tensor:
    """Parameter draw: uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)]."""
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    data = rng.uniform(-bound, bound, size=shape).astype(dtype)
    return Tensor(data, requires_grad=True, name=name)
