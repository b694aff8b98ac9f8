"""Dense float64 tensors with reverse-mode automatic differentiation.

Deliberately small: only the kernels the window-attention classifier needs,
all in double precision on numpy arrays. Differentiable operations link each
result to its inputs together with a local backward rule; ``Tensor.backward``
replays those rules once each, in reverse topological order. Forward values
are immutable by convention, gradients are the only mutable state.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "ShapeError",
    "Tensor",
    "activation",
    "add",
    "assert_all_finite",
    "finite_difference_gradient",
    "global_average_pool",
    "gradients",
    "layer_norm",
    "log_softmax",
    "matmul",
    "max_relative_error",
    "mean",
    "mul",
    "neg",
    "relu",
    "reshape",
    "roll",
    "sigmoid",
    "softmax",
    "sub",
    "tape",
    "tensor_sum",
    "transpose",
]

_MAX_RANK = 4


class ShapeError(ValueError):
    """Operand shapes violate an operation's contract."""


def _as_array(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim > _MAX_RANK:
        raise ShapeError(f"rank {arr.ndim} tensor exceeds supported rank {_MAX_RANK}")
    return arr


class Tensor:
    """A dense real tensor, optionally tracked for gradient accumulation."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, values, requires_grad: bool = False):
        self.data = _as_array(values)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() requires a single element, got shape {self.shape}")
        return float(self.data.reshape(()))

    def __float__(self) -> float:
        return self.item()

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # arithmetic sugar; scalars and arrays are wrapped as constants
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
        if isinstance(other, Tensor):
            raise TypeError("tensor/tensor division is not supported; divide by a scalar")
        return mul(self, 1.0 / float(other))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, shape: Sequence[int]) -> "Tensor":
        return reshape(self, shape)

    def transpose(self, axes: Sequence[int]) -> "Tensor":
        return transpose(self, axes)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return mean(self, axis, keepdims)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tensor_sum(self, axis, keepdims)

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into ``grad`` for every tracked tensor.

        Gradients are freshly computed per call: every tensor reachable from
        this one has its ``grad`` reset before the reverse sweep. The loss
        must be a scalar.
        """
        if self.data.size != 1:
            raise ShapeError(f"backward requires a scalar loss, got shape {self.shape}")
        order = tape(self)
        for node in order:
            if node.requires_grad:
                node.grad = np.zeros_like(node.data)
        if not self.requires_grad:
            return
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)


def tape(root: Tensor) -> list[Tensor]:
    """Tensors reachable from ``root``, inputs strictly before their results."""
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
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def gradients(loss: Tensor, leaves: Iterable[Tensor]) -> list[np.ndarray]:
    """d(loss)/d(leaf) per leaf; zeros for leaves the loss never touched."""
    loss.backward()
    out = []
    for leaf in leaves:
        out.append(np.zeros_like(leaf.data) if leaf.grad is None else leaf.grad)
    return out


def _as_tensor(values) -> Tensor:
    return values if isinstance(values, Tensor) else Tensor(values)


def _result(data: np.ndarray, parents: tuple[Tensor, ...], rule) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = rule
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape``, undoing numpy broadcasting."""
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    squeezed = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if squeezed:
        grad = grad.sum(axis=squeezed, keepdims=True)
    return grad


def _normalize_axes(axis, rank: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(rank))
    axes = (axis,) if isinstance(axis, (int, np.integer)) else tuple(axis)
    out = []
    for ax in axes:
        ax = int(ax)
        if not -rank <= ax < rank:
            raise ShapeError(f"axis {ax} out of range for rank {rank}")
        out.append(ax % rank)
    if len(set(out)) != len(out):
        raise ShapeError(f"axes {axes} are not distinct")
    return tuple(sorted(out))


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data + b.data

    def rule(g):
        if a.requires_grad:
            a.grad += _unbroadcast(g, a.data.shape)
        if b.requires_grad:
            b.grad += _unbroadcast(g, b.data.shape)

    return _result(data, (a, b), rule)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data - b.data

    def rule(g):
        if a.requires_grad:
            a.grad += _unbroadcast(g, a.data.shape)
        if b.requires_grad:
            b.grad -= _unbroadcast(g, b.data.shape)

    return _result(data, (a, b), rule)


def neg(x) -> Tensor:
    x = _as_tensor(x)

    def rule(g):
        if x.requires_grad:
            x.grad -= g

    return _result(-x.data, (x,), rule)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data * b.data

    def rule(g):
        if a.requires_grad:
            a.grad += _unbroadcast(g * b.data, a.data.shape)
        if b.requires_grad:
            b.grad += _unbroadcast(g * a.data, b.data.shape)

    return _result(data, (a, b), rule)


def matmul(a, b) -> Tensor:
    """Matrix product; stacked operands broadcast over their leading axes."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    try:
        data = np.matmul(a.data, b.data)
    except ValueError as exc:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}") from exc

    def rule(g):
        if a.requires_grad:
            ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
            a.grad += _unbroadcast(ga, a.data.shape)
        if b.requires_grad:
            gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
            b.grad += _unbroadcast(gb, b.data.shape)

    return _result(data, (a, b), rule)


def relu(x) -> Tensor:
    x = _as_tensor(x)
    data = np.maximum(x.data, 0.0)

    def rule(g):
        if x.requires_grad:
            x.grad += g * (x.data > 0.0)

    return _result(data, (x,), rule)


def _sigmoid_values(v: np.ndarray) -> np.ndarray:
    # split on sign so exp never overflows
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    e = np.exp(v[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def sigmoid(x) -> Tensor:
    x = _as_tensor(x)
    data = _sigmoid_values(x.data)

    def rule(g):
        if x.requires_grad:
            x.grad += g * data * (1.0 - data)

    return _result(data, (x,), rule)


def activation(x, kind: str) -> Tensor:
    """Elementwise nonlinearity, ``kind`` in {"relu", "sigmoid"}."""
    if kind == "relu":
        return relu(x)
    if kind == "sigmoid":
        return sigmoid(x)
    raise ValueError(f"unknown activation kind {kind!r}")


def softmax(x, axis: int) -> Tensor:
    """Normalized exponentials along ``axis``, max-subtracted for stability."""
    x = _as_tensor(x)
    (ax,) = _normalize_axes(axis, x.ndim)
    shifted = x.data - x.data.max(axis=ax, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=ax, keepdims=True)

    def rule(g):
        if x.requires_grad:
            inner = (g * data).sum(axis=ax, keepdims=True)
            x.grad += data * (g - inner)

    return _result(data, (x,), rule)


def log_softmax(x, axis: int) -> Tensor:
    x = _as_tensor(x)
    (ax,) = _normalize_axes(axis, x.ndim)
    shifted = x.data - x.data.max(axis=ax, keepdims=True)
    data = shifted - np.log(np.exp(shifted).sum(axis=ax, keepdims=True))

    def rule(g):
        if x.requires_grad:
            x.grad += g - np.exp(data) * g.sum(axis=ax, keepdims=True)

    return _result(data, (x,), rule)


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean and unit (biased) variance."""
    x, gamma, beta = _as_tensor(x), _as_tensor(gamma), _as_tensor(beta)
    width = x.shape[-1]
    if gamma.shape != (width,) or beta.shape != (width,):
        raise ShapeError(
            f"layer_norm: gamma {gamma.shape} / beta {beta.shape} must match last axis ({width},)"
        )
    if eps <= 0:
        raise ValueError("layer_norm: eps must be positive")
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = centered * inv_std
    data = x_hat * gamma.data + beta.data

    def rule(g):
        reduce_axes = tuple(range(g.ndim - 1))
        if beta.requires_grad:
            beta.grad += g.sum(axis=reduce_axes)
        if gamma.requires_grad:
            gamma.grad += (g * x_hat).sum(axis=reduce_axes)
        if x.requires_grad:
            gx_hat = g * gamma.data
            n = float(width)
            term = gx_hat - gx_hat.mean(axis=-1, keepdims=True)
            term -= x_hat * (gx_hat * x_hat).mean(axis=-1, keepdims=True)
            x.grad += inv_std * term

    return _result(data, (x, gamma, beta), rule)


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = _as_tensor(x)
    axes = _normalize_axes(axis, x.ndim)
    data = x.data.mean(axis=axes, keepdims=keepdims)
    count = float(np.prod([x.shape[ax] for ax in axes])) if axes else 1.0

    def rule(g):
        if x.requires_grad:
            if not keepdims:
                g = np.expand_dims(g, axes)
            x.grad += np.broadcast_to(g / count, x.data.shape)

    return _result(data, (x,), rule)


def tensor_sum(x, axis=None, keepdims: bool = False) -> Tensor:
    x = _as_tensor(x)
    axes = _normalize_axes(axis, x.ndim)
    data = x.data.sum(axis=axes, keepdims=keepdims)

    def rule(g):
        if x.requires_grad:
            if not keepdims:
                g = np.expand_dims(g, axes)
            x.grad += np.broadcast_to(g, x.data.shape)

    return _result(data, (x,), rule)


def global_average_pool(x, axis) -> Tensor:
    """Arithmetic mean over the listed axes, reducing the shape accordingly."""
    return mean(x, axis, keepdims=False)


def reshape(x, shape: Sequence[int]) -> Tensor:
    x = _as_tensor(x)
    shape = tuple(int(n) for n in shape)
    data = x.data.reshape(shape)
    original = x.data.shape

    def rule(g):
        if x.requires_grad:
            x.grad += g.reshape(original)

    return _result(data, (x,), rule)


def transpose(x, axes: Sequence[int]) -> Tensor:
    x = _as_tensor(x)
    axes = tuple(int(a) for a in axes)
    data = x.data.transpose(axes)
    inverse = tuple(np.argsort(axes))

    def rule(g):
        if x.requires_grad:
            x.grad += g.transpose(inverse)

    return _result(data, (x,), rule)


def roll(x, shift: int, axis: int) -> Tensor:
    """Cyclically rotate ``axis`` by ``shift`` positions."""
    x = _as_tensor(x)
    (ax,) = _normalize_axes(axis, x.ndim)
    data = np.roll(x.data, shift, axis=ax)

    def rule(g):
        if x.requires_grad:
            x.grad += np.roll(g, -shift, axis=ax)

    return _result(data, (x,), rule)


def assert_all_finite(x, context: str = "tensor") -> None:
    """Validity scan: raise if any stored value is NaN or infinite."""
    data = x.data if isinstance(x, Tensor) else np.asarray(x)
    if not np.isfinite(data).all():
        raise ValueError(f"{context} contains NaN or Inf values")


def finite_difference_gradient(f, x, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar ``f``, one coordinate at a time.

    ``f`` receives a Tensor shaped like ``x`` and must return a scalar
    (float or single-element Tensor). Serves as the independent oracle for
    every analytic backward rule in this module.
    """
    if h <= 0:
        raise ValueError("finite_difference_gradient: h must be positive")
    base = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    grad = np.zeros_like(base)
    flat = base.reshape(-1)
    flat_grad = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + h
        upper = float(f(Tensor(base.copy())))
        flat[i] = original - h
        lower = float(f(Tensor(base.copy())))
        flat[i] = original
        flat_grad[i] = (upper - lower) / (2.0 * h)
    return grad


def max_relative_error(a, b) -> float:
    """Symmetric, zero-safe worst-case relative error between two arrays."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0
