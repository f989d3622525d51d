"""Differentiable operations over `Tensor`.

Every operation checks its output for non-finite values and raises
`NumericalError` at the boundary; shape problems raise `DimensionError`.
"""
from typing import Optional, Sequence, Tuple
import logging

import numpy as np
from scipy import special

from varcontext.compute.tensor import ArrayLike, Tensor
from varcontext.errors import DimensionError, DomainError, NumericalError

logger = logging.getLogger(__name__)

EPS = 1e-8


def fc(x: Tensor, W: Tensor, b: Tensor) -> Tensor:
    """Fully connected layer y = Wx + b over the last axis of `x`.

    Args:
        x (Tensor): Input of shape (..., in).
        W (Tensor): Weights of shape (out, in).
        b (Tensor): Bias of shape (out,).

    Returns:
        Tensor: Output of shape (..., out).
    """
    x = Tensor.lift(x)
    if W.ndim != 2 or x.shape[-1] != W.shape[1]:
        raise DimensionError(f"fc: input extent {x.shape} does not conform to weights {W.shape}")
    if b.shape != (W.shape[0],):
        raise DimensionError(f"fc: bias extent {b.shape} does not match weights {W.shape}")
    lead = x.shape[:-1]
    flat = x.data.reshape(-1, W.shape[1])
    out = (flat @ W.data.T + b.data).reshape(lead + (W.shape[0],))

    def backward(g):
        g2 = g.reshape(-1, W.shape[0])
        x.accumulate((g2 @ W.data).reshape(x.shape))
        W.accumulate(g2.T @ flat)
        b.accumulate(g2.sum(axis=0))
    return Tensor.from_op(out, (x, W, b), "fc", backward)


def exp(x: Tensor) -> Tensor:
    x = Tensor.lift(x)
    values = np.exp(x.data)

    def backward(g):
        x.accumulate(g * values)
    return Tensor.from_op(values, (x,), "exp", backward)


def log(x: Tensor) -> Tensor:
    x = Tensor.lift(x)
    if np.any(x.data <= 0):
        raise NumericalError("log of a non-positive value")

    def backward(g):
        x.accumulate(g / x.data)
    return Tensor.from_op(np.log(x.data), (x,), "log", backward)


def tanh(x: Tensor) -> Tensor:
    x = Tensor.lift(x)
    values = np.tanh(x.data)

    def backward(g):
        x.accumulate(g * (1.0 - values ** 2))
    return Tensor.from_op(values, (x,), "tanh", backward)


def sigmoid(x: Tensor) -> Tensor:
    x = Tensor.lift(x)
    values = special.expit(x.data)

    def backward(g):
        x.accumulate(g * values * (1.0 - values))
    return Tensor.from_op(values, (x,), "sigmoid", backward)


def log_sigmoid(x: Tensor) -> Tensor:
    """log(sigmoid(x)), stable for large |x|."""
    x = Tensor.lift(x)

    def backward(g):
        x.accumulate(g * special.expit(-x.data))
    return Tensor.from_op(special.log_expit(x.data), (x,), "log_sigmoid", backward)


def clamp_min(x: Tensor, floor: float) -> Tensor:
    x = Tensor.lift(x)
    keep = x.data >= floor

    def backward(g):
        x.accumulate(g * keep)
    return Tensor.from_op(np.maximum(x.data, floor), (x,), "clamp_min", backward)


def max_select(x: Tensor, axis: int = -1) -> Tensor:
    """Maximum along `axis`; the gradient flows to the first maximal entry."""
    x = Tensor.lift(x)
    idx = np.expand_dims(np.argmax(x.data, axis=axis), axis)
    values = np.take_along_axis(x.data, idx, axis=axis)

    def backward(g):
        full = np.zeros_like(x.data)
        np.put_along_axis(full, idx, np.expand_dims(g, axis), axis=axis)
        x.accumulate(full)
    return Tensor.from_op(values.squeeze(axis), (x,), "max", backward)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [Tensor.lift(t) for t in tensors]
    try:
        values = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise DimensionError(f"concat: {[t.shape for t in tensors]} along axis {axis}") from exc
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        for t, piece in zip(tensors, np.split(g, bounds, axis=axis)):
            t.accumulate(piece)
    return Tensor.from_op(values, tensors, "concat", backward)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [Tensor.lift(t) for t in tensors]
    try:
        values = np.stack([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise DimensionError(f"stack: {[t.shape for t in tensors]}") from exc

    def backward(g):
        for i, t in enumerate(tensors):
            t.accumulate(np.take(g, i, axis=axis))
    return Tensor.from_op(values, tensors, "stack", backward)


def softmax(x: Tensor, mask: Optional[np.ndarray] = None, axis: int = -1) -> Tensor:
    """Numerically stable softmax along `axis`.

    Args:
        x (Tensor): Scores.
        mask (np.ndarray, optional): Boolean array broadcastable to `x`;
            False entries receive probability exactly 0.

    Raises:
        DomainError: If every entry of some slice is masked.
    """
    x = Tensor.lift(x)
    if mask is None:
        keep = np.ones(x.shape, dtype=bool)
    else:
        keep = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
        if np.any(~keep.any(axis=axis)):
            raise DomainError("softmax over an all-masked input")
    shifted = np.where(keep, x.data, -np.inf)
    shifted = shifted - shifted.max(axis=axis, keepdims=True)
    e = np.where(keep, np.exp(shifted), 0.0)
    p = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        x.accumulate(p * (g - (g * p).sum(axis=axis, keepdims=True)))
    return Tensor.from_op(p, (x,), "softmax", backward)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    x = Tensor.lift(x)
    values = special.log_softmax(x.data, axis=axis)

    def backward(g):
        x.accumulate(g - np.exp(values) * g.sum(axis=axis, keepdims=True))
    return Tensor.from_op(values, (x,), "log_softmax", backward)


def l2norm(x: Tensor, axis: int = -1, eps: float = EPS) -> Tensor:
    """x / (||x||_2 + eps) along `axis`; the zero vector maps to zero."""
    x = Tensor.lift(x)
    norm = np.sqrt((x.data ** 2).sum(axis=axis, keepdims=True))
    denom = norm + eps
    values = x.data / denom
    safe = np.where(norm > 0, norm, 1.0)

    def backward(g):
        dot = (g * x.data).sum(axis=axis, keepdims=True)
        x.accumulate(g / denom - x.data * dot / (denom ** 2 * safe))
    return Tensor.from_op(values, (x,), "l2norm", backward)


def dropout(x: Tensor, rate: float, rng: Optional[np.random.Generator], training: bool) -> Tensor:
    """Inverted dropout; identity outside training or at rate 0."""
    if not training or rate <= 0.0:
        return x
    if rng is None:
        raise DomainError("dropout in training requires a random generator")
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * keep


def lstm_step(w_t: Tensor, state: Tuple[Tensor, Tensor], W: Tensor, b: Tensor) -> Tuple[Tensor, Tensor]:
    """One LSTM cell update with gates ordered input, forget, output, candidate.

    Args:
        w_t (Tensor): Input of shape (D,).
        state (Tuple[Tensor, Tensor]): Previous (h, c), each of shape (H,).
        W (Tensor): Weights of shape (4H, D + H).
        b (Tensor): Bias of shape (4H,).

    Returns:
        Tuple[Tensor, Tensor]: The new (h, c).
    """
    h, c = state
    hidden = h.shape[-1]
    if W.shape[0] != 4 * hidden or c.shape != h.shape:
        raise DimensionError(f"lstm_step: weights {W.shape} do not match hidden size {hidden}")
    gates = fc(concat([w_t, h]), W, b)
    i = sigmoid(gates[0:hidden])
    f = sigmoid(gates[hidden:2 * hidden])
    o = sigmoid(gates[2 * hidden:3 * hidden])
    g = tanh(gates[3 * hidden:])
    c_next = f * c + i * g
    h_next = o * tanh(c_next)
    return h_next, c_next


def zeros(*shape: int) -> Tensor:
    return Tensor(np.zeros(shape))


def as_tensor(value: ArrayLike) -> Tensor:
    return Tensor.lift(value)
