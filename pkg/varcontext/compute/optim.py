"""SGD with momentum and weight decay, plus global-norm gradient clipping."""
from typing import Dict, Iterable, List, Optional
import logging

import numpy as np

from varcontext.compute.parameters import Parameter
from varcontext.errors import NumericalError

logger = logging.getLogger(__name__)


def _check_gradients(params: List[Parameter]) -> None:
    bad = [p.name for p in params if p.grad is None or not np.all(np.isfinite(p.grad))]
    if bad:
        raise NumericalError(f"Non-finite gradient in parameter blocks: {', '.join(bad)}")


def sgd_momentum_step(params: Iterable[Parameter], lr: float, momentum: float, weight_decay: float,
                      velocity: Optional[Dict[str, np.ndarray]] = None) -> Dict[str, np.ndarray]:
    """Apply one update in place.

    v <- momentum * v + grad + weight_decay * theta (decay only on parameters
    flagged `decay`); theta <- theta - lr * v.

    Args:
        params: Parameters with populated gradients.
        velocity: Momentum buffers keyed by parameter name; updated in place.

    Returns:
        Dict[str, np.ndarray]: The momentum buffers.

    Raises:
        NumericalError: If any gradient is non-finite. No parameter is changed.
    """
    params = [p for p in params if p.trainable]
    _check_gradients(params)
    velocity = {} if velocity is None else velocity
    for p in params:
        grad = p.grad
        if p.decay and weight_decay:
            grad = grad + weight_decay * p.data
        v = velocity.get(p.name)
        v = grad.copy() if v is None else momentum * v + grad
        velocity[p.name] = v
        p.data = p.data - lr * v
    return velocity


def global_grad_norm(params: Iterable[Parameter]) -> float:
    return float(np.sqrt(sum(float(np.sum(p.grad ** 2)) for p in params if p.grad is not None)))


def clip_grad_norm(params: Iterable[Parameter], max_norm: float) -> float:
    """Scale all gradients so their joint L2 norm is at most `max_norm`.

    Returns:
        float: The norm before clipping.
    """
    params = [p for p in params if p.trainable]
    norm = global_grad_norm(params)
    if norm > max_norm > 0:
        scale = max_norm / norm
        for p in params:
            p.grad = p.grad * scale
        logger.debug("Clipped gradient norm %.4f to %.4f", norm, max_norm)
    return norm


class SGDMomentum:
    """Stateful wrapper keeping momentum buffers across steps.

    Args:
        params: Parameters to update.
        momentum (float): Momentum coefficient.
        weight_decay (float): L2 coefficient for parameters flagged `decay`.
        decay_biases (bool): Also decay parameters created without the flag.
    """

    def __init__(self, params: Iterable[Parameter], momentum: float = 0.95,
                 weight_decay: float = 5e-4, decay_biases: bool = False):
        self.params = [p for p in params if p.trainable]
        self.momentum = momentum
        self.weight_decay = weight_decay
        if decay_biases:
            for p in self.params:
                p.decay = True
        self.velocity: Dict[str, np.ndarray] = {}

    def step(self, lr: float) -> None:
        sgd_momentum_step(self.params, lr, self.momentum, self.weight_decay, self.velocity)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: v.copy() for name, v in self.velocity.items()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        self.velocity = {name: np.asarray(v, dtype=np.float64).copy() for name, v in state.items()}
