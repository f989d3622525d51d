"""REINFORCE estimator for the generation loss under a sampled referent.

The gradient of E_{x ~ p(x|L)} L_c(x, L) is estimated with K = 1 sample by
backpropagating the surrogate (L_c(x_k) - b) * log p(x_k | L) + L_c(x_k),
where the advantage L_c(x_k) - b is a constant and b is a moving average of
past generation losses.
"""
from typing import Optional, Tuple
import logging

import numpy as np

from varcontext.compute import Tensor
from varcontext.errors import NumericalError

logger = logging.getLogger(__name__)

BASELINE_DECAY = 0.9


def baseline_update(b: float, loss: float, decay: float = BASELINE_DECAY) -> float:
    """b' = decay * b + (1 - decay) * loss."""
    return decay * b + (1.0 - decay) * loss


class BaselineTracker:
    """Exponential moving average of generation losses."""

    def __init__(self, value: float = 0.0, decay: float = BASELINE_DECAY):
        self.value = float(value)
        self.decay = decay

    def update(self, loss: float) -> float:
        value = baseline_update(self.value, float(loss), self.decay)
        if not np.isfinite(value):
            raise NumericalError("Baseline became non-finite")
        self.value = value
        return value


def sample_referent(posterior: np.ndarray, rng: np.random.Generator) -> int:
    """Draw x_k ~ p(x | L).

    Raises:
        NumericalError: When the posterior carries no usable mass.
    """
    p = np.asarray(posterior, dtype=np.float64)
    total = p.sum()
    if not np.all(np.isfinite(p)) or np.any(p < 0) or total <= 1e-300 or abs(total - 1.0) > 1e-6:
        raise NumericalError(f"Degenerate posterior for sampling: sum={total!r}")
    return int(rng.choice(len(p), p=p / total))


def reinforce_surrogate(ce_loss: Tensor, log_prob: Tensor, baseline: float) -> Tensor:
    """(L_c - b) * log p(x_k|L) + L_c with the advantage held constant."""
    advantage = float(ce_loss.item()) - baseline
    return log_prob * advantage + ce_loss


def reinforce_generation_step(model, scene, expression, scores, baseline: float,
                              rng: np.random.Generator, training: bool = True) -> Tuple[Tensor, float, int]:
    """Sample a referent, build its generation loss and the REINFORCE surrogate.

    Args:
        model: Object exposing ``ce_loss(scene, expression, k, scores, training, rng)``.
        scores (GroundingScores): Scores under the current parameters.
        baseline (float): Current moving-average baseline b.

    Returns:
        Tuple[Tensor, float, int]: Surrogate to backpropagate, L_c value and x_k.
    """
    k = sample_referent(scores.posterior.data, rng)
    ce = model.ce_loss(scene, expression, k, scores, training=training, rng=rng)
    surrogate = reinforce_surrogate(ce, scores.log_posterior[k], baseline)
    return surrogate, float(ce.item()), k


def exact_expected_gradient(probs: np.ndarray, losses: np.ndarray, score_grads: np.ndarray,
                            loss_grads: np.ndarray) -> np.ndarray:
    """sum_x p(x) [L(x) grad log p(x) + grad L(x)] for enumerable x.

    Args:
        probs: (K,) distribution.
        losses: (K,) loss per outcome.
        score_grads: (K, P) gradient of log p(x) per outcome.
        loss_grads: (K, P) gradient of L(x) per outcome.
    """
    return (probs[:, None] * (losses[:, None] * score_grads + loss_grads)).sum(axis=0)


def estimator_samples(outcome_gradients: np.ndarray, probs: np.ndarray, count: int,
                      rng: np.random.Generator, outcomes: Optional[np.ndarray] = None) -> np.ndarray:
    """Per-sample estimator values for `count` draws of x (K = 1 each).

    `outcome_gradients[k]` is the estimator value when x_k is drawn; pass the
    same `outcomes` to compare estimators under common random numbers.
    """
    if outcomes is None:
        outcomes = rng.choice(len(probs), size=count, p=probs)
    return outcome_gradients[outcomes]
