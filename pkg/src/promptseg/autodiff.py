"""Dense float64 tensors with reverse-mode automatic differentiation.

Every operation that participates in training records a backward closure on
the output tensor; ``backward(loss)`` replays those closures in reverse
topological order. A graph can be differentiated once: the loss is marked
consumed afterwards and a second call raises ``StateError``.

Conventions:
  * all values are float64, kept dense and row-major;
  * forward outputs are checked for NaN/Inf (disable via ``no_finite_checks``
    only when profiling);
  * gradients accumulate additively, so shared subexpressions are handled.
"""

from __future__ import annotations

import contextlib
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    ContractError,
    DimensionError,
    NonFiniteError,
    ParameterError,
    StateError,
    SupportError,
)

_grad_enabled = True
_finite_checks = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference / extraction)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


@contextlib.contextmanager
def no_finite_checks():
    global _finite_checks
    prev = _finite_checks
    _finite_checks = False
    try:
        yield
    finally:
        _finite_checks = prev


def _check_finite(values: np.ndarray, op: str) -> None:
    if _finite_checks and not np.all(np.isfinite(values)):
        raise NonFiniteError(f"{op} produced non-finite values")


def _reduce_to(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """A dense array plus the bookkeeping needed for one backward pass."""

    __slots__ = ("values", "requires_grad", "grad", "_parents", "_backward", "_consumed")

    def __init__(self, values, requires_grad: bool = False):
        self.values = np.asarray(values, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None
        self._consumed = False

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def _result(values: np.ndarray, parents: Sequence["Tensor"], op: str) -> "Tensor":
        _check_finite(values, op)
        out = Tensor(values)
        if _grad_enabled and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
        return out

    # -- introspection ---------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def size(self) -> int:
        return self.values.size

    def item(self) -> float:
        return float(self.values)

    def __repr__(self) -> str:
        flag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.values.shape}{flag})"

    # -- elementwise arithmetic ------------------------------------------------

    @staticmethod
    def _coerce(other) -> "Tensor":
        return other if isinstance(other, Tensor) else Tensor(other)

    def __add__(self, other) -> "Tensor":
        other = self._coerce(other)
        try:
            out = self._result(self.values + other.values, (self, other), "add")
        except ValueError as exc:
            raise DimensionError(f"add: incompatible shapes {self.shape} and {other.shape}") from exc
        if out.requires_grad:
            def backward(g):
                return _reduce_to(g, self.shape), _reduce_to(g, other.shape)
            out._backward = backward
        return out

    __radd__ = __add__

    def __sub__(self, other) -> "Tensor":
        other = self._coerce(other)
        try:
            out = self._result(self.values - other.values, (self, other), "sub")
        except ValueError as exc:
            raise DimensionError(f"sub: incompatible shapes {self.shape} and {other.shape}") from exc
        if out.requires_grad:
            def backward(g):
                return _reduce_to(g, self.shape), _reduce_to(-g, other.shape)
            out._backward = backward
        return out

    def __rsub__(self, other) -> "Tensor":
        return self._coerce(other).__sub__(self)

    def __mul__(self, other) -> "Tensor":
        other = self._coerce(other)
        try:
            out = self._result(self.values * other.values, (self, other), "mul")
        except ValueError as exc:
            raise DimensionError(f"mul: incompatible shapes {self.shape} and {other.shape}") from exc
        if out.requires_grad:
            a, b = self.values, other.values
            def backward(g):
                return _reduce_to(g * b, self.shape), _reduce_to(g * a, other.shape)
            out._backward = backward
        return out

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        other = self._coerce(other)
        try:
            out = self._result(self.values / other.values, (self, other), "div")
        except ValueError as exc:
            raise DimensionError(f"div: incompatible shapes {self.shape} and {other.shape}") from exc
        if out.requires_grad:
            a, b = self.values, other.values
            def backward(g):
                return _reduce_to(g / b, self.shape), _reduce_to(-g * a / (b * b), other.shape)
            out._backward = backward
        return out

    def __rtruediv__(self, other) -> "Tensor":
        return self._coerce(other).__truediv__(self)

    def __neg__(self) -> "Tensor":
        out = self._result(-self.values, (self,), "neg")
        if out.requires_grad:
            out._backward = lambda g: (-g,)
        return out

    def __pow__(self, exponent: float) -> "Tensor":
        if not np.isscalar(exponent):
            raise ParameterError("pow supports scalar exponents only")
        out = self._result(self.values ** exponent, (self,), "pow")
        if out.requires_grad:
            x = self.values
            out._backward = lambda g: (g * exponent * x ** (exponent - 1),)
        return out

    def exp(self) -> "Tensor":
        y = np.exp(self.values)
        out = self._result(y, (self,), "exp")
        if out.requires_grad:
            out._backward = lambda g: (g * y,)
        return out

    def log(self) -> "Tensor":
        out = self._result(np.log(self.values), (self,), "log")
        if out.requires_grad:
            x = self.values
            out._backward = lambda g: (g / x,)
        return out

    def sqrt(self) -> "Tensor":
        y = np.sqrt(self.values)
        out = self._result(y, (self,), "sqrt")
        if out.requires_grad:
            out._backward = lambda g: (g / (2.0 * y),)
        return out

    def tanh(self) -> "Tensor":
        y = np.tanh(self.values)
        out = self._result(y, (self,), "tanh")
        if out.requires_grad:
            out._backward = lambda g: (g * (1.0 - y * y),)
        return out

    def relu(self) -> "Tensor":
        out = self._result(np.maximum(self.values, 0.0), (self,), "relu")
        if out.requires_grad:
            mask = self.values > 0.0
            out._backward = lambda g: (g * mask,)
        return out

    def clamp_max(self, cap: float) -> "Tensor":
        """Elementwise min(x, cap); gradient passes where x <= cap."""
        out = self._result(np.minimum(self.values, cap), (self,), "clamp_max")
        if out.requires_grad:
            mask = self.values <= cap
            out._backward = lambda g: (g * mask,)
        return out

    def detach(self) -> "Tensor":
        """A constant view of the same values (stops gradient flow)."""
        return Tensor(self.values)

    # -- shape manipulation ------------------------------------------------------

    def reshape(self, *shape: int) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        try:
            out_values = self.values.reshape(shape)
        except ValueError as exc:
            raise DimensionError(f"cannot reshape {self.shape} to {shape}") from exc
        out = self._result(out_values, (self,), "reshape")
        if out.requires_grad:
            src = self.shape
            out._backward = lambda g: (g.reshape(src),)
        return out

    def swapaxes(self, a: int, b: int) -> "Tensor":
        out = self._result(np.swapaxes(self.values, a, b), (self,), "swapaxes")
        if out.requires_grad:
            out._backward = lambda g: (np.swapaxes(g, a, b),)
        return out

    def transpose(self) -> "Tensor":
        if self.ndim != 2:
            raise DimensionError("transpose is defined for 2-d tensors; use swapaxes")
        return self.swapaxes(0, 1)

    def __getitem__(self, index) -> "Tensor":
        out = self._result(self.values[index], (self,), "getitem")
        if out.requires_grad:
            shape = self.shape
            def backward(g):
                buf = np.zeros(shape, dtype=np.float64)
                np.add.at(buf, index, g)
                return (buf,)
            out._backward = backward
        return out

    # -- reductions ---------------------------------------------------------------

    def sum(self, axis: int | None = None, keepdims: bool = False) -> "Tensor":
        out = self._result(self.values.sum(axis=axis, keepdims=keepdims), (self,), "sum")
        if out.requires_grad:
            shape = self.shape
            def backward(g):
                if axis is not None and not keepdims:
                    g = np.expand_dims(g, axis)
                return (np.broadcast_to(g, shape).copy(),)
            out._backward = backward
        return out

    def mean(self, axis: int | None = None, keepdims: bool = False) -> "Tensor":
        count = self.size if axis is None else self.shape[axis]
        if count == 0:
            raise DimensionError("mean over an empty axis")
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    # -- linear algebra -------------------------------------------------------------

    def __matmul__(self, other: "Tensor") -> "Tensor":
        other = self._coerce(other)
        if self.ndim < 2 or other.ndim < 2:
            raise DimensionError("matmul requires tensors with at least 2 dimensions")
        if self.shape[-1] != other.shape[-2]:
            raise DimensionError(
                f"matmul: inner dimensions disagree ({self.shape} @ {other.shape})"
            )
        out = self._result(np.matmul(self.values, other.values), (self, other), "matmul")
        if out.requires_grad:
            a, b = self.values, other.values
            def backward(g):
                ga = _reduce_to(np.matmul(g, np.swapaxes(b, -1, -2)), a.shape)
                gb = _reduce_to(np.matmul(np.swapaxes(a, -1, -2), g), b.shape)
                return ga, gb
            out._backward = backward
        return out

    # -- structured ops ---------------------------------------------------------------

    def softmax(self, axis: int, temperature: float = 1.0) -> "Tensor":
        if temperature <= 0.0:
            raise ParameterError(f"softmax temperature must be positive, got {temperature}")
        z = self.values / temperature
        z = z - z.max(axis=axis, keepdims=True)
        e = np.exp(z)
        y = e / e.sum(axis=axis, keepdims=True)
        out = self._result(y, (self,), "softmax")
        if out.requires_grad:
            def backward(g):
                inner = (g * y).sum(axis=axis, keepdims=True)
                return ((g - inner) * y / temperature,)
            out._backward = backward
        return out

    def log_softmax(self, axis: int) -> "Tensor":
        z = self.values - self.values.max(axis=axis, keepdims=True)
        lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
        y = z - lse
        out = self._result(y, (self,), "log_softmax")
        if out.requires_grad:
            sm = np.exp(y)
            def backward(g):
                return (g - sm * g.sum(axis=axis, keepdims=True),)
            out._backward = backward
        return out

    # -- backward ------------------------------------------------------------------------

    def backward(self) -> None:
        if self.size != 1:
            raise ContractError(f"backward requires a scalar loss, got shape {self.shape}")
        if self._consumed:
            raise StateError("this graph was already differentiated once")
        self._consumed = True

        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
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

        self.grad = np.ones_like(self.values)
        for node in reversed(order):
            if node._backward is None or node.grad is None:
                continue
            for parent, g in zip(node._parents, node._backward(node.grad)):
                if not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = np.zeros_like(parent.values)
                parent.grad += g


def backward(loss: Tensor) -> None:
    loss.backward()


def tensor(values, requires_grad: bool = False) -> Tensor:
    return Tensor(values, requires_grad=requires_grad)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    return a @ b


def softmax(x: Tensor, axis: int, temperature: float = 1.0) -> Tensor:
    return x.softmax(axis, temperature)


def mean_pool(x: Tensor, axis: int) -> Tensor:
    """Arithmetic mean along ``axis``; the axis is dropped from the shape."""
    if not -x.ndim <= axis < x.ndim:
        raise DimensionError(f"mean_pool: axis {axis} invalid for shape {x.shape}")
    if x.shape[axis] == 0:
        raise DimensionError("mean_pool over an empty axis")
    return x.mean(axis=axis)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [Tensor._coerce(t) for t in tensors]
    values = np.concatenate([t.values for t in tensors], axis=axis)
    out = Tensor._result(values, tensors, "concat")
    if out.requires_grad:
        sizes = [t.shape[axis] for t in tensors]
        splits = np.cumsum(sizes)[:-1]
        out._backward = lambda g: tuple(np.split(g, splits, axis=axis))
    return out


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [Tensor._coerce(t) for t in tensors]
    values = np.stack([t.values for t in tensors], axis=axis)
    out = Tensor._result(values, tensors, "stack")
    if out.requires_grad:
        def backward(g):
            moved = np.moveaxis(g, axis, 0)
            return tuple(moved[i] for i in range(len(tensors)))
        out._backward = backward
    return out


def conv1d_dilated(x: Tensor, w: Tensor, dilation: int) -> Tensor:
    """Same-length dilated convolution over time.

    ``x`` is (C_in, T), ``w`` is (C_out, C_in, 3); the input is zero padded by
    ``dilation`` on both sides so the output is again length T.
    """
    if not isinstance(dilation, (int, np.integer)) or dilation < 1:
        raise ParameterError(f"dilation must be a positive integer, got {dilation}")
    if x.ndim != 2:
        raise DimensionError(f"conv1d_dilated expects (C_in, T) input, got {x.shape}")
    if w.ndim != 3 or w.shape[2] != 3:
        raise DimensionError(f"conv1d_dilated expects (C_out, C_in, 3) kernel, got {w.shape}")
    if w.shape[1] != x.shape[0]:
        raise DimensionError(
            f"conv1d_dilated: kernel C_in {w.shape[1]} != input channels {x.shape[0]}"
        )
    c_in, t = x.shape
    d = int(dilation)
    padded = np.zeros((c_in, t + 2 * d), dtype=np.float64)
    padded[:, d : d + t] = x.values
    taps = [padded[:, k * d : k * d + t] for k in range(3)]
    values = sum(np.matmul(w.values[:, :, k], taps[k]) for k in range(3))
    out = Tensor._result(values, (x, w), "conv1d_dilated")
    if out.requires_grad:
        wv = w.values
        def backward(g):
            gx_padded = np.zeros_like(padded)
            gw = np.zeros_like(wv)
            for k in range(3):
                gx_padded[:, k * d : k * d + t] += np.matmul(wv[:, :, k].T, g)
                gw[:, :, k] = np.matmul(g, taps[k].T)
            return gx_padded[:, d : d + t], gw
        out._backward = backward
    return out


def generalized_kl(a: Tensor, b: Tensor) -> Tensor:
    """Sum of a_ij * log(a_ij / b_ij) with the 0 * log 0 = 0 convention.

    Requires b > 0 wherever a > 0; any a mass outside b's support is an error.
    """
    a = Tensor._coerce(a)
    b = Tensor._coerce(b)
    if a.shape != b.shape:
        raise DimensionError(f"generalized_kl: shapes differ ({a.shape} vs {b.shape})")
    av, bv = a.values, b.values
    if np.any(av < 0.0) or np.any(bv < 0.0):
        raise ParameterError("generalized_kl requires nonnegative entries")
    mask = av > 0.0
    if np.any(mask & (bv <= 0.0)):
        raise SupportError("generalized_kl: second argument has zero mass on the first's support")
    ratio = np.ones_like(av)
    np.divide(av, bv, out=ratio, where=mask)
    log_ratio = np.log(ratio)
    value = float(np.sum(av * log_ratio, where=mask))
    out = Tensor._result(np.asarray(value), (a, b), "generalized_kl")
    if out.requires_grad:
        def backward(g):
            ga = np.where(mask, log_ratio + 1.0, 0.0) * g
            gb = np.where(mask, -ratio, 0.0) * g
            return ga, gb
        out._backward = backward
    return out
