"""Variational context grounding head.

For every candidate region i the head estimates a deterministic context
z_i = sum_j beta_ij x_j with beta_i = softmax_j s_phi(x_i, x_j), then scores

    S  = s_theta(x_i, z_i) - s_phi(x_i, z_i) + s_omega(z_i)
    S' = s_theta(x_i, z_i) - s_phi(x_i, z_i) + s_omega'(z_i) + log s_psi(x_i)

and the "wo_reg" ablation keeps s_theta alone.
"""
from typing import Any, Callable, Optional, Tuple, Union
import logging

import numpy as np

from varcontext.compute import ParameterStore, Tensor, softmax
from varcontext.comprehension.base_head import MODES, BaseHead, GroundingScores
from varcontext.comprehension.scorers import OneBranchScorer, TwoBranchScorer
from varcontext.errors import ConfigError
from varcontext.language import CueFeatures

logger = logging.getLogger(__name__)

Score = Union[Tensor, float]


def total_score(s_theta: Score, s_phi: Score, s_omega: Score, mode: str = "plain",
                s_omega_prime: Optional[Score] = None, s_psi: Optional[Score] = None) -> Score:
    """Combine score components for `mode` (plain, with_generation, wo_reg).

    Raises:
        ConfigError: For with_generation without s_psi or s_omega'.
    """
    if mode == "plain":
        return s_theta - s_phi + s_omega
    if mode == "with_generation":
        if s_psi is None or s_omega_prime is None:
            raise ConfigError("S' requested but the generation module is absent")
        return s_theta - s_phi + s_omega_prime + s_psi
    if mode == "wo_reg":
        return s_theta
    raise ConfigError(f"Unknown scoring mode '{mode}'. Expected one of {MODES}")


def pair_grid(X: Tensor) -> Tuple[Tensor, Tensor]:
    """Left and right operands of every ordered pair, each of shape (N, N, D)."""
    n, d = X.shape
    return X.reshape(n, 1, d).broadcast_to((n, n, d)), X.reshape(1, n, d).broadcast_to((n, n, d))


class VCHead(BaseHead):
    """Comprehension head with the phi, theta, omega (and omega') networks.

    Args:
        store (ParameterStore): Parameter owner.
        feature_dim (int): D_x.
        embedding_dim (int): D_w.
        exclude_self (bool): Drop j = i from the context sum when N > 1.
        generation (bool): Create the omega' network used by S'.
    """
    name = "vc"

    def __init__(self, store: ParameterStore, feature_dim: int, embedding_dim: int,
                 exclude_self: bool = False, generation: bool = False):
        self.exclude_self = exclude_self
        self.phi = TwoBranchScorer(store, "phi", feature_dim, embedding_dim)
        self.theta = TwoBranchScorer(store, "theta", feature_dim, embedding_dim)
        self.omega = OneBranchScorer(store, "omega", feature_dim, embedding_dim)
        self.omega_prime = OneBranchScorer(store, "omega_prime", feature_dim, embedding_dim) if generation else None

    def supports_generation(self) -> bool:
        return self.omega_prime is not None

    # ------------------------------------------------------------------ #
    #  SCORE COMPONENTS                                                   #
    # ------------------------------------------------------------------ #

    def pair_score(self, x_i: Tensor, x_j: Tensor, cues: CueFeatures) -> Tensor:
        """s_phi(i, j); asymmetric in its arguments."""
        return self.phi(x_j, x_i, x_j, cues.y_c1, cues.y_c2)

    def pair_scores(self, X: Tensor, cues: CueFeatures) -> Tensor:
        """Matrix P[i, j] = s_phi(x_i, x_j) over all ordered pairs."""
        left, right = pair_grid(X)
        return self.phi.single_score(X, cues.y_c1) + self.phi.pair_score(left, right, cues.y_c2)

    def context_mask(self, n: int) -> np.ndarray:
        if self.exclude_self and n > 1:
            return ~np.eye(n, dtype=bool)
        return np.ones((n, n), dtype=bool)

    def estimate_context(self, X: Tensor, cues: CueFeatures,
                         pair: Optional[Tensor] = None) -> Tuple[Tensor, Tensor]:
        """beta (N, N) with rows summing to 1, and contexts z = beta @ X."""
        pair = self.pair_scores(X, cues) if pair is None else pair
        beta = softmax(pair, mask=self.context_mask(X.shape[0]), axis=1)
        return beta, beta @ X

    def referent_score(self, X: Tensor, Z: Tensor, cues: CueFeatures) -> Tensor:
        """s_theta with single input x_i and pairwise input [x_i, z_i]."""
        return self.theta(X, X, Z, cues.y_r1, cues.y_r2)

    def context_score(self, X: Tensor, Z: Tensor, cues: CueFeatures) -> Tensor:
        """s_phi evaluated at (x_i, z_i)."""
        return self.phi(Z, X, Z, cues.y_c1, cues.y_c2)

    def regularization_score(self, Z: Tensor, cues: CueFeatures, prime: bool = False) -> Tensor:
        scorer = self.omega_prime if prime else self.omega
        if scorer is None:
            raise ConfigError("s_omega' requested but the head was built without generation")
        return scorer(Z, cues.y_g)

    # ------------------------------------------------------------------ #
    #  FULL SCORE                                                         #
    # ------------------------------------------------------------------ #

    def score(self, X: Tensor, cues: CueFeatures, mode: str = "plain",
              psi_fn: Optional[Callable[[Tensor, Tensor], Tensor]] = None, key: Any = None) -> GroundingScores:
        """All components, the total for `mode` and the posterior p(x|L).

        Args:
            psi_fn: Called with (beta, pair scores) and returning log s_psi per
                region; required for mode "with_generation".
        """
        if mode not in MODES:
            raise ConfigError(f"Unknown scoring mode '{mode}'. Expected one of {MODES}")
        pair = self.pair_scores(X, cues)
        beta, Z = self.estimate_context(X, cues, pair)
        s_theta = self.referent_score(X, Z, cues)
        s_phi = self.context_score(X, Z, cues)
        s_omega = self.regularization_score(Z, cues)
        s_omega_prime = s_psi = None
        if mode == "with_generation":
            if psi_fn is None or self.omega_prime is None:
                raise ConfigError("S' requested but the generation module is absent")
            s_omega_prime = self.regularization_score(Z, cues, prime=True)
            s_psi = psi_fn(beta, pair)
        total = total_score(s_theta, s_phi, s_omega, mode, s_omega_prime, s_psi)
        return GroundingScores.from_total(total, s_theta=s_theta, s_phi=s_phi, s_omega=s_omega,
                                          s_omega_prime=s_omega_prime, s_psi=s_psi, beta=beta, z=Z,
                                          pair=pair, mode=mode)
