"""MIL aggregation of pairwise joint probabilities p(x, z) over contexts z."""
from typing import Sequence

import numpy as np

EPS = 1e-12


def _probabilities(values: Sequence[float]) -> np.ndarray:
    p = np.asarray(values, dtype=np.float64).ravel()
    if p.size == 0:
        raise ValueError("MIL aggregation needs at least one context candidate")
    if np.any(p < 0) or np.any(p > 1) or not np.all(np.isfinite(p)):
        raise ValueError("MIL aggregation expects probabilities in [0, 1]")
    return p


def mil_maxpool_score(pair_probs: Sequence[float]) -> float:
    """log max_z p(x, z), floored at log EPS."""
    return float(np.log(max(_probabilities(pair_probs).max(), EPS)))


def mil_noisyor_score(pair_probs: Sequence[float]) -> float:
    """log(1 - prod_z (1 - p(x, z))), floored at log EPS."""
    p = _probabilities(pair_probs)
    return float(np.log(max(-np.expm1(np.sum(np.log1p(-np.minimum(p, 1.0 - EPS)))), EPS)))
