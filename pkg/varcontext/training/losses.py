"""Grounding losses and the entropy regularizer."""
from typing import Optional, Union
import logging

from varcontext.compute import Tensor, log_softmax, max_select, softmax
from varcontext.comprehension import GroundingScores
from varcontext.errors import ModeError

logger = logging.getLogger(__name__)

ENTROPY_WEIGHT = 5e-3

Scores = Union[GroundingScores, Tensor]


def _log_posterior(scores: Scores) -> Tensor:
    if isinstance(scores, GroundingScores):
        return scores.log_posterior
    return log_softmax(scores)


def supervised_loss(scores: Scores, gt_index: Optional[int]) -> Tensor:
    """-log p(x_gt | L); accepts GroundingScores or raw region scores."""
    if gt_index is None:
        raise ModeError("Supervised loss needs a ground-truth referent")
    log_p = _log_posterior(scores)
    if not 0 <= gt_index < log_p.shape[0]:
        raise ModeError(f"Ground-truth index {gt_index} outside {log_p.shape[0]} regions")
    return -log_p[gt_index]


def unsupervised_loss(scores: Scores) -> Tensor:
    """-max_x log p(x | L)."""
    return -max_select(_log_posterior(scores), axis=0)


def entropy_term(scores: Scores) -> Tensor:
    """H(p) = -sum p log p of the region posterior."""
    if isinstance(scores, GroundingScores):
        p, log_p = scores.posterior, scores.log_posterior
    else:
        p, log_p = softmax(scores), log_softmax(scores)
    return -(p * log_p).sum()
