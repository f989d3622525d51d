"""Central finite-difference gradient checker."""
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, Optional
import logging

import numpy as np

from varcontext.compute.parameters import Parameter
from varcontext.compute.tensor import Tensor
from varcontext.errors import NumericalError

logger = logging.getLogger(__name__)


@dataclass
class GradReport:
    """Maximum relative error per parameter between analytic and numeric gradients."""
    errors: Dict[str, float]
    step: float
    checked: Dict[str, int] = field(default_factory=dict)

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    def worst(self) -> Optional[str]:
        return max(self.errors, key=self.errors.get) if self.errors else None

    def passed(self, tolerance: float) -> bool:
        return self.max_error < tolerance


def _evaluate(loss_fn: Callable[[], Tensor]) -> float:
    value = loss_fn()
    value = float(value.data.sum()) if isinstance(value, Tensor) else float(value)
    if not np.isfinite(value):
        raise NumericalError("grad_check: loss function returned a non-finite value")
    return value


def grad_check(loss_fn: Callable[[], Tensor], params: Iterable[Parameter], step: float = 1e-5,
               atol: float = 1e-6, max_coords: Optional[int] = None, seed: int = 0) -> GradReport:
    """Compare analytic gradients against central differences.

    Args:
        loss_fn: Deterministic callable building and returning a scalar loss.
        params: Parameters (or tensors requiring gradients) to perturb.
        step (float): Finite-difference step, must be positive.
        atol (float): Floor of the relative-error denominator.
        max_coords (int, optional): Check a seeded sample of at most this many
            scalars per parameter instead of every one.

    Returns:
        GradReport: Per-parameter maximum of |a - n| / max(|a|, |n|, atol).
    """
    if step <= 0:
        raise ValueError("grad_check: step must be positive")
    params = list(params)
    for p in params:
        p.grad = np.zeros_like(p.data)
    loss = loss_fn()
    if not np.all(np.isfinite(loss.data)):
        raise NumericalError("grad_check: loss function returned a non-finite value")
    loss.backward()
    analytic = {id(p): p.grad.copy() for p in params}

    rng = np.random.default_rng(seed)
    errors: Dict[str, float] = {}
    checked: Dict[str, int] = {}
    for index, p in enumerate(params):
        name = getattr(p, "name", f"tensor{index}")
        flat = p.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
        worst = 0.0
        for k in coords:
            original = flat[k]
            flat[k] = original + step
            plus = _evaluate(loss_fn)
            flat[k] = original - step
            minus = _evaluate(loss_fn)
            flat[k] = original
            numeric = (plus - minus) / (2.0 * step)
            a = analytic[id(p)].reshape(-1)[k]
            worst = max(worst, abs(a - numeric) / max(abs(a), abs(numeric), atol))
        errors[name] = float(worst)
        checked[name] = int(len(coords))
    report = GradReport(errors=errors, step=step, checked=checked)
    logger.debug("grad_check max relative error %.3e (%s)", report.max_error, report.worst())
    return report
