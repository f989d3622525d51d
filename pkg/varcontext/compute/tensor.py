"""Reverse-mode differentiable tensor.

A `Tensor` wraps a float64 numpy array. Operations build a per-example graph
by recording their parents and a backward closure; `Tensor.backward()` walks
the graph in reverse topological order and accumulates gradients into every
node that requires them.
"""
from typing import Callable, Iterable, Optional, Sequence, Tuple, Union
import logging

import numpy as np

from varcontext.errors import DimensionError, NumericalError

logger = logging.getLogger(__name__)

ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence[float]]


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def _check_finite(values: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(values)):
        raise NumericalError(f"Non-finite value produced by '{op}'")


class Tensor:
    """Float64 array node of a differentiable computation graph.

    Args:
        data: Values; converted to a float64 array.
        requires_grad (bool): Whether gradients are accumulated into `.grad`.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data: ArrayLike, requires_grad: bool = False,
                 _parents: Tuple["Tensor", ...] = (), _op: str = "leaf"):
        if isinstance(data, Tensor):
            data = data.data
        values = np.array(data, dtype=np.float64)
        _check_finite(values, _op)
        self.data = values
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward: Optional[Callable[[np.ndarray], None]] = None
        self.op = _op

    # ------------------------------------------------------------------ #
    #  GRAPH PLUMBING                                                     #
    # ------------------------------------------------------------------ #

    @classmethod
    def from_op(cls, data: np.ndarray, parents: Iterable["Tensor"], op: str,
                backward: Callable[[np.ndarray], None]) -> "Tensor":
        """Create the output node of an operation.

        Parents that do not require gradients are dropped from the graph.
        """
        tracked = tuple(p for p in parents if p.requires_grad)
        out = cls(data, requires_grad=bool(tracked), _parents=tracked, _op=op)
        if tracked:
            out._backward = backward
        return out

    def accumulate(self, grad: np.ndarray) -> None:
        """Add `grad` into this node's gradient, reducing broadcast axes."""
        if not self.requires_grad:
            return
        grad = _unbroadcast(np.asarray(grad, dtype=np.float64), self.data.shape)
        if self.grad is None:
            self.grad = grad.copy()
        else:
            self.grad = self.grad + grad

    def backward(self, grad: Optional[ArrayLike] = None) -> None:
        """Propagate gradients from this node to every reachable leaf.

        Args:
            grad: Seed gradient; defaults to ones (a scalar loss).
        """
        if not self.requires_grad:
            return
        seed = np.ones_like(self.data) if grad is None else np.asarray(grad, dtype=np.float64)
        if seed.shape != self.data.shape:
            raise DimensionError(f"Seed gradient shape {seed.shape} does not match {self.data.shape}")

        order = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))

        self.accumulate(seed)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # ------------------------------------------------------------------ #
    #  PROPERTIES                                                         #
    # ------------------------------------------------------------------ #

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __len__(self) -> int:
        return len(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    # ------------------------------------------------------------------ #
    #  ARITHMETIC                                                         #
    # ------------------------------------------------------------------ #

    @staticmethod
    def lift(value: ArrayLike) -> "Tensor":
        return value if isinstance(value, Tensor) else Tensor(value)

    def __add__(self, other: ArrayLike) -> "Tensor":
        other = Tensor.lift(other)

        def backward(g):
            self.accumulate(g)
            other.accumulate(g)
        return Tensor.from_op(self.data + other.data, (self, other), "add", backward)

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        def backward(g):
            self.accumulate(-g)
        return Tensor.from_op(-self.data, (self,), "neg", backward)

    def __sub__(self, other: ArrayLike) -> "Tensor":
        other = Tensor.lift(other)

        def backward(g):
            self.accumulate(g)
            other.accumulate(-g)
        return Tensor.from_op(self.data - other.data, (self, other), "sub", backward)

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        return Tensor.lift(other) - self

    def __mul__(self, other: ArrayLike) -> "Tensor":
        other = Tensor.lift(other)

        def backward(g):
            self.accumulate(g * other.data)
            other.accumulate(g * self.data)
        return Tensor.from_op(self.data * other.data, (self, other), "mul", backward)

    __rmul__ = __mul__

    def __truediv__(self, other: ArrayLike) -> "Tensor":
        other = Tensor.lift(other)
        if np.any(other.data == 0):
            raise NumericalError("Division by zero")

        def backward(g):
            self.accumulate(g / other.data)
            other.accumulate(-g * self.data / (other.data ** 2))
        return Tensor.from_op(self.data / other.data, (self, other), "div", backward)

    def __rtruediv__(self, other: ArrayLike) -> "Tensor":
        return Tensor.lift(other) / self

    def __matmul__(self, other: ArrayLike) -> "Tensor":
        other = Tensor.lift(other)
        a, b = self.data, other.data
        if a.ndim > 2 or b.ndim > 2:
            raise DimensionError("matmul supports only 1-D and 2-D operands")
        if a.shape[-1] != b.shape[0]:
            raise DimensionError(f"matmul extents do not conform: {a.shape} @ {b.shape}")

        def backward(g):
            if a.ndim == 2 and b.ndim == 2:
                self.accumulate(g @ b.T)
                other.accumulate(a.T @ g)
            elif a.ndim == 2:
                self.accumulate(np.outer(g, b))
                other.accumulate(a.T @ g)
            elif b.ndim == 2:
                self.accumulate(b @ g)
                other.accumulate(np.outer(a, g))
            else:
                self.accumulate(g * b)
                other.accumulate(g * a)
        return Tensor.from_op(a @ b, (self, other), "matmul", backward)

    def __getitem__(self, index) -> "Tensor":
        shape = self.data.shape

        def backward(g):
            full = np.zeros(shape)
            np.add.at(full, index, g)
            self.accumulate(full)
        return Tensor.from_op(self.data[index], (self,), "getitem", backward)

    # ------------------------------------------------------------------ #
    #  SHAPE AND REDUCTION                                                #
    # ------------------------------------------------------------------ #

    def sum(self, axis: Optional[int] = None, keepdims: bool = False) -> "Tensor":
        shape = self.data.shape

        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            self.accumulate(np.broadcast_to(g, shape))
        return Tensor.from_op(self.data.sum(axis=axis, keepdims=keepdims), (self,), "sum", backward)

    def mean(self, axis: Optional[int] = None, keepdims: bool = False) -> "Tensor":
        count = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        original = self.data.shape
        try:
            values = self.data.reshape(shape)
        except ValueError as exc:
            raise DimensionError(f"Cannot reshape {original} to {shape}") from exc

        def backward(g):
            self.accumulate(g.reshape(original))
        return Tensor.from_op(values, (self,), "reshape", backward)

    @property
    def T(self) -> "Tensor":
        return self.transpose()

    def transpose(self, axes: Optional[Sequence[int]] = None) -> "Tensor":
        inverse = None if axes is None else np.argsort(axes)

        def backward(g):
            self.accumulate(np.transpose(g, inverse))
        return Tensor.from_op(np.transpose(self.data, axes), (self,), "transpose", backward)

    def broadcast_to(self, shape: Tuple[int, ...]) -> "Tensor":
        try:
            values = np.broadcast_to(self.data, shape)
        except ValueError as exc:
            raise DimensionError(f"Cannot broadcast {self.shape} to {shape}") from exc

        def backward(g):
            self.accumulate(g)
        return Tensor.from_op(values.copy(), (self,), "broadcast_to", backward)
