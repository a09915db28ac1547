"""Dense NCHW tensors with define-by-run reverse-mode differentiation.

Every differentiable op records a :class:`Node` on the tensor it returns.
``backward`` walks the nodes reachable from a scalar loss in reverse
execution order (the :class:`Tape`), visiting each node once.
"""

from __future__ import annotations

import contextlib
import itertools
from collections.abc import Callable, Sequence

import numpy as np

from . import kernels

_default_dtype = np.dtype(np.float32)
_grad_enabled = True
_seq = itertools.count()


class ShapeError(ValueError):
    """Operand shapes do not satisfy an op's contract."""


class NonFiniteError(FloatingPointError):
    """A NaN or Inf reached a place where it is not allowed."""


def get_default_dtype() -> np.dtype:
    return _default_dtype


def set_default_dtype(dtype) -> None:
    global _default_dtype
    dtype = np.dtype(dtype)
    if dtype not in (np.float32, np.float64):
        raise ValueError(f"unsupported dtype {dtype}; use float32 or float64")
    _default_dtype = dtype


@contextlib.contextmanager
def precision(dtype):
    """Switch the default float type, e.g. ``with precision("float64"):`` for grad checks."""
    prev = _default_dtype
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(prev)


@contextlib.contextmanager
def no_grad():
    global _grad_enabled
    prev, _grad_enabled = _grad_enabled, False
    try:
        yield
    finally:
        _grad_enabled = prev


class Node:
    __slots__ = ("parents", "backward", "seq")

    def __init__(self, parents: tuple["Tensor", ...], backward: Callable, seq: int):
        self.parents = parents
        self.backward = backward
        self.seq = seq


class Tensor:
    """A float array plus optional gradient bookkeeping."""

    __slots__ = ("data", "requires_grad", "grad", "node", "name")

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str | None = None):
        arr = np.asarray(data, dtype=dtype or _default_dtype)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.node: Node | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{tag}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data: np.ndarray, parents: Sequence[Tensor], backward: Callable) -> Tensor:
    """Wrap an op output; attach a node when any parent wants gradients."""
    out = Tensor(data, dtype=data.dtype)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.node = Node(tuple(parents), backward, next(_seq))
    return out


class Tape:
    """Nodes reachable from a root, in reverse execution order."""

    def __init__(self, root: Tensor):
        seen: set[int] = set()
        found: list[tuple[int, Tensor]] = []
        stack = [root]
        while stack:
            t = stack.pop()
            if t.node is None or id(t) in seen:
                continue
            seen.add(id(t))
            found.append((t.node.seq, t))
            stack.extend(t.node.parents)
        found.sort(key=lambda item: item[0], reverse=True)
        self.entries = [t for _, t in found]

    def __len__(self) -> int:
        return len(self.entries)


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` on every grad-enabled leaf that feeds ``loss``."""
    if loss.data.size != 1 or loss.ndim > 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ValueError("loss does not depend on any grad-enabled tensor")
    grads: dict[int, np.ndarray] = {id(loss): np.ones(loss.shape, dtype=loss.dtype)}
    for t in Tape(loss).entries:
        g = grads.pop(id(t), None)
        if g is None:
            continue
        parent_grads = t.node.backward(g)
        for p, pg in zip(t.node.parents, parent_grads):
            if pg is None or not p.requires_grad:
                continue
            if p.node is None:
                p.grad = pg.astype(p.dtype, copy=True) if p.grad is None else p.grad + pg
            elif id(p) in grads:
                grads[id(p)] = grads[id(p)] + pg
            else:
                grads[id(p)] = pg


# ---------------------------------------------------------------- shape helpers


def _need4(x: Tensor, op: str) -> None:
    if x.ndim != 4:
        raise ShapeError(f"{op}: expected N,C,H,W input, got shape {x.shape}")


def _need_even(x: Tensor, op: str) -> None:
    _need4(x, op)
    for axis, label in ((2, "H"), (3, "W")):
        if x.shape[axis] % 2:
            raise ShapeError(f"{op}: {label}={x.shape[axis]} is odd")


def _check_binary(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape == b.shape or b.ndim == 0 or a.ndim == 0:
        return
    # declared broadcast: one-channel gate against C channels
    if a.ndim == 4 and b.ndim == 4 and (a.shape[1] == 1 or b.shape[1] == 1):
        if a.shape[0] == b.shape[0] and a.shape[2:] == b.shape[2:]:
            return
    raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    if len(shape) == 0:
        return np.asarray(g.sum(), dtype=g.dtype)
    return g.sum(axis=1, keepdims=True)


# ---------------------------------------------------------------- pointwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_binary(a, b, "add")
    return _result(a.data + b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_binary(a, b, "subtract")
    return _result(a.data - b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_binary(a, b, "multiply")
    return _result(a.data * b.data, (a, b),
                   lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def sigmoid(x: Tensor) -> Tensor:
    # split by sign so neither branch overflows exp
    d = x.data
    e = np.exp(-np.abs(d))
    y = np.where(d >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(d.dtype, copy=False)
    return _result(y, (x,), lambda g: (g * y * (1 - y),))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _result(x.data * mask, (x,), lambda g: (g * mask,))


def square(x: Tensor) -> Tensor:
    return _result(x.data * x.data, (x,), lambda g: (2 * g * x.data,))


_POINTWISE = {"sigmoid": sigmoid, "multiply": mul, "subtract": sub, "add": add, "relu": relu}


def pointwise(kind: str, *operands) -> Tensor:
    """Name-dispatched elementwise op (sigmoid | multiply | subtract | add | relu)."""
    try:
        fn = _POINTWISE[kind]
    except KeyError:
        raise ValueError(f"unknown pointwise kind {kind!r}") from None
    return fn(*operands)


# ---------------------------------------------------------------- reductions / reshapes


def sum(x: Tensor) -> Tensor:  # noqa: A001
    return _result(np.asarray(x.data.sum(), dtype=x.dtype), (x,),
                   lambda g: (np.broadcast_to(g, x.shape).copy(),))


def mean(x: Tensor, axis: int | tuple[int, ...] | None = None) -> Tensor:
    out = np.asarray(x.data.mean(axis=axis), dtype=x.dtype)
    count = x.data.size // max(out.size, 1)

    def back(g):
        if axis is None:
            return (np.full(x.shape, g / count, dtype=x.dtype),)
        return (np.broadcast_to(np.expand_dims(g / count, axis), x.shape).copy(),)

    return _result(out, (x,), back)


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    return _result(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def slice_channels(x: Tensor, start: int, stop: int) -> Tensor:
    _need4(x, "slice_channels")

    def back(g):
        full = np.zeros(x.shape, dtype=g.dtype)
        full[:, start:stop] = g
        return (full,)

    return _result(x.data[:, start:stop].copy(), (x,), back)


def concat_channels(inputs: Sequence[Tensor]) -> Tensor:
    if not inputs:
        raise ShapeError("concat_channels: empty input list")
    for t in inputs:
        _need4(t, "concat_channels")
    ref = inputs[0].shape
    for k, t in enumerate(inputs[1:], start=1):
        if t.shape[0] != ref[0]:
            raise ShapeError(f"concat_channels: input {k} has N={t.shape[0]}, expected {ref[0]}")
        if t.shape[2:] != ref[2:]:
            raise ShapeError(f"concat_channels: input {k} has H,W={t.shape[2:]}, expected {ref[2:]}")
    bounds = np.cumsum([0] + [t.shape[1] for t in inputs])

    def back(g):
        return tuple(g[:, bounds[i]:bounds[i + 1]] for i in range(len(inputs)))

    return _result(np.concatenate([t.data for t in inputs], axis=1), tuple(inputs), back)


def mse(pred: Tensor, target) -> Tensor:
    """Mean squared error against a constant array broadcastable to ``pred``."""
    tgt = np.broadcast_to(np.asarray(target, dtype=pred.dtype), pred.shape)
    diff = pred.data - tgt
    n = diff.size
    return _result(np.asarray((diff * diff).mean(), dtype=pred.dtype), (pred,),
                   lambda g: (2 * g * diff / n,))


# ---------------------------------------------------------------- spatial ops


def conv2d_3x3(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Stride-1 3x3 convolution with zero "same" padding."""
    _need4(x, "conv2d_3x3")
    if weight.ndim != 4 or weight.shape[2:] != (3, 3):
        raise ShapeError(f"conv2d_3x3: weight must be Cout,Cin,3,3, got {weight.shape}")
    if weight.shape[1] != x.shape[1]:
        raise ShapeError(
            f"conv2d_3x3: Cin mismatch, input has C={x.shape[1]} but weight expects {weight.shape[1]}"
        )
    if bias is not None and bias.shape != (weight.shape[0],):
        raise ShapeError(f"conv2d_3x3: bias shape {bias.shape} != Cout ({weight.shape[0]},)")
    out = kernels.conv3x3(x.data, weight.data)
    if bias is not None:
        out += bias.data.astype(out.dtype)[None, :, None, None]
    parents = (x, weight) if bias is None else (x, weight, bias)

    def back(g):
        gx = kernels.conv3x3_grad_input(g, weight.data) if x.requires_grad else None
        gw = kernels.conv3x3_grad_weight(x.data, g) if weight.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2, 3))

    return _result(out, parents, back)


def max_pool2(x: Tensor) -> Tensor:
    _need_even(x, "max_pool2")
    out, arg = kernels.maxpool2(x.data)
    return _result(out, (x,), lambda g: (kernels.maxpool2_grad(g, arg),))


def downsample2(x: Tensor) -> Tensor:
    """2x2 average pooling."""
    _need_even(x, "downsample2")
    N, C, H, W = x.shape
    out = x.data.reshape(N, C, H // 2, 2, W // 2, 2).mean(axis=(3, 5))

    def back(g):
        return (np.repeat(np.repeat(g, 2, axis=2), 2, axis=3) * x.dtype.type(0.25),)

    return _result(out, (x,), back)


def _up_axis(a: np.ndarray, axis: int) -> np.ndarray:
    # half-pixel bilinear x2 along one axis, edges clamped
    a = np.moveaxis(a, axis, -1)
    n = a.shape[-1]
    prev = np.concatenate([a[..., :1], a[..., :-1]], axis=-1)
    nxt = np.concatenate([a[..., 1:], a[..., -1:]], axis=-1)
    out = np.empty(a.shape[:-1] + (2 * n,), dtype=a.dtype)
    c, q = a.dtype.type(0.75), a.dtype.type(0.25)
    out[..., 0::2] = c * a + q * prev
    out[..., 1::2] = c * a + q * nxt
    return np.moveaxis(out, -1, axis)


def _up_axis_t(g: np.ndarray, axis: int) -> np.ndarray:
    g = np.moveaxis(g, axis, -1)
    ge, go = g[..., 0::2], g[..., 1::2]
    c, q = g.dtype.type(0.75), g.dtype.type(0.25)
    out = c * (ge + go)
    out[..., :-1] += q * ge[..., 1:]
    out[..., 0] += q * ge[..., 0]
    out[..., 1:] += q * go[..., :-1]
    out[..., -1] += q * go[..., -1]
    return np.moveaxis(out, -1, axis)


def upsample2(x: Tensor) -> Tensor:
    """Bilinear x2 upsampling, half-pixel centres (corners not aligned)."""
    _need4(x, "upsample2")
    out = _up_axis(_up_axis(x.data, 2), 3)
    return _result(out, (x,), lambda g: (_up_axis_t(_up_axis_t(g, 3), 2),))


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Plain (non-differentiable) half-pixel bilinear resize over the last two axes."""
    in_h, in_w = img.shape[-2:]

    def taps(n_out, n_in):
        src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        src = np.clip(src, 0, n_in - 1)
        lo = np.floor(src).astype(np.int64)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, src - lo

    y0, y1, fy = taps(out_h, in_h)
    x0, x1, fx = taps(out_w, in_w)
    a = img.astype(np.float64)
    rows = a[..., y0, :] * (1 - fy)[:, None] + a[..., y1, :] * fy[:, None]
    return rows[..., x0] * (1 - fx) + rows[..., x1] * fx


def check_finite(x: Tensor | np.ndarray, what: str) -> None:
    arr = x.data if isinstance(x, Tensor) else x
    if not kernels.all_finite(arr):
        raise NonFiniteError(f"{what} contains NaN or Inf")
