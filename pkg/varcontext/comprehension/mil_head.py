"""Multiple-instance baselines over the phi pair-score network.

Both heads read p(x_i, z_j) = sigmoid(s_phi(x_i, x_j)) for j != i (j = i when
the scene has a single region) and aggregate over j:

    max-pool:  log max_j p(x_i, z_j)
    noisy-or:  log(1 - prod_j (1 - p(x_i, z_j)))

Both are evaluated in logit space; see `varcontext.evaluation.mil` for the
same rules over plain probabilities.
"""
from typing import Any, Callable, Optional
import logging

import numpy as np

from varcontext.compute import ParameterStore, Tensor, clamp_min, exp, log, log_sigmoid, max_select
from varcontext.comprehension.base_head import BaseHead, GroundingScores
from varcontext.comprehension.scorers import TwoBranchScorer
from varcontext.comprehension.vc_head import pair_grid
from varcontext.errors import ConfigError
from varcontext.language import CueFeatures

logger = logging.getLogger(__name__)

LOG_FLOOR = 1e-12
_MASKED_LOGIT = -1e9


class MILHead(BaseHead):
    """Shared plumbing of the two aggregation rules."""

    def __init__(self, store: ParameterStore, feature_dim: int, embedding_dim: int, **_unused: Any):
        self.phi = TwoBranchScorer(store, "phi", feature_dim, embedding_dim)

    def pair_scores(self, X: Tensor, cues: CueFeatures) -> Tensor:
        left, right = pair_grid(X)
        return self.phi.single_score(X, cues.y_c1) + self.phi.pair_score(left, right, cues.y_c2)

    @staticmethod
    def candidate_mask(n: int) -> np.ndarray:
        return ~np.eye(n, dtype=bool) if n > 1 else np.ones((1, 1), dtype=bool)

    def aggregate(self, pair: Tensor, mask: np.ndarray) -> Tensor:
        raise NotImplementedError

    def score(self, X: Tensor, cues: CueFeatures, mode: str = "plain",
              psi_fn: Optional[Callable[[Tensor, Tensor], Tensor]] = None, key: Any = None) -> GroundingScores:
        if mode == "with_generation":
            raise ConfigError(f"The {self.name} head has no generation score")
        pair = self.pair_scores(X, cues)
        total = self.aggregate(pair, self.candidate_mask(X.shape[0]))
        return GroundingScores.from_total(total, s_phi=pair, pair=pair, mode=mode)


class MaxPoolHead(MILHead):
    name = "maxpool"

    def aggregate(self, pair: Tensor, mask: np.ndarray) -> Tensor:
        # log max_j sigmoid(s_ij) == log sigmoid(max_j s_ij)
        masked = pair + Tensor(np.where(mask, 0.0, _MASKED_LOGIT))
        return log_sigmoid(max_select(masked, axis=1))


class NoisyOrHead(MILHead):
    name = "noisyor"

    def aggregate(self, pair: Tensor, mask: np.ndarray) -> Tensor:
        # log(1 - p) == log sigmoid(-s)
        log_none = (log_sigmoid(-pair) * Tensor(mask.astype(np.float64))).sum(axis=1)
        return log(clamp_min(1.0 - exp(log_none), LOG_FLOOR))
