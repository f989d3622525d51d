"""Enumeration oracle for the variational lower bound on toy joints.

A toy holds an explicit normalized joint p(x, z | L) over n referents and m
context configurations, plus a proposal q(z | x, L) per referent. Everything
is computed exactly by summing over z.
"""
from dataclasses import dataclass
from typing import NamedTuple, Optional, Union
import logging

import numpy as np
from scipy.special import logsumexp, rel_entr, xlogy

from varcontext.errors import ValidationError

logger = logging.getLogger(__name__)

MAX_CONFIGURATIONS = 2 ** 12
NORMALIZATION_TOL = 1e-9

Value = Union[float, np.ndarray]


class ElboTerms(NamedTuple):
    elbo: Value
    log_marginal: Value
    kl: Value


@dataclass
class ToyJoint:
    """Joint p(x, z | L) of shape (n, m) and proposal q(z | x, L) of the same shape."""
    joint: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        self.joint = np.asarray(self.joint, dtype=np.float64)
        self.q = np.asarray(self.q, dtype=np.float64)

    @property
    def n(self) -> int:
        return self.joint.shape[0]

    @property
    def m(self) -> int:
        return self.joint.shape[1]

    def validate(self) -> None:
        """Raises ValidationError listing every normalization problem."""
        issues = []
        if self.joint.ndim != 2 or self.q.shape != self.joint.shape:
            issues.append(f"joint {self.joint.shape} and q {self.q.shape} must share an (n, m) shape")
        else:
            if self.m > MAX_CONFIGURATIONS:
                issues.append(f"{self.m} context configurations exceed {MAX_CONFIGURATIONS}")
            if np.any(self.joint < 0) or not np.all(np.isfinite(self.joint)):
                issues.append("joint has negative or non-finite entries")
            if abs(self.joint.sum() - 1.0) > NORMALIZATION_TOL:
                issues.append(f"joint sums to {self.joint.sum()!r}, not 1")
            if np.any(self.q < 0) or not np.all(np.isfinite(self.q)):
                issues.append("q has negative or non-finite entries")
            bad_rows = np.flatnonzero(np.abs(self.q.sum(axis=1) - 1.0) > NORMALIZATION_TOL)
            issues.extend(f"q(.|x={x}) sums to {self.q[x].sum()!r}, not 1" for x in bad_rows)
        if issues:
            raise ValidationError("Invalid toy joint", issues)

    def prior(self) -> np.ndarray:
        """p(z | L), marginalizing x."""
        return self.joint.sum(axis=0)

    def exact_posterior(self) -> np.ndarray:
        """p(z | x, L) per referent; rows with zero marginal raise ValidationError."""
        marginal = self.joint.sum(axis=1, keepdims=True)
        if np.any(marginal <= 0):
            raise ValidationError("Posterior undefined", [f"p(x={x}) = 0" for x in np.flatnonzero(marginal <= 0)])
        return self.joint / marginal

    def with_q(self, q: np.ndarray) -> "ToyJoint":
        return ToyJoint(self.joint, q)

    @classmethod
    def random(cls, rng: np.random.Generator, n: int, k: int, concentration: float = 1.0) -> "ToyJoint":
        """Dirichlet joint over n referents and the 2**k subsets of k context regions."""
        m = 2 ** k
        if m > MAX_CONFIGURATIONS:
            raise ValidationError("Toy too large", [f"2**{k} configurations exceed {MAX_CONFIGURATIONS}"])
        joint = rng.dirichlet(np.full(n * m, concentration)).reshape(n, m)
        q = rng.dirichlet(np.full(m, concentration), size=n)
        return cls(joint, q)


def elbo_oracle(toy: ToyJoint, x: Optional[int] = None) -> ElboTerms:
    """ELBO, exact log-marginal and KL(q || p_z) per referent.

    ELBO = E_q[log p(x | z, L)] - KL(q(z | x, L) || p(z | L)). Returns arrays
    over referents, or scalars when `x` is given.
    """
    toy.validate()
    joint, q = toy.joint, toy.q
    prior = toy.prior()
    with np.errstate(divide="ignore", invalid="ignore"):
        likelihood = np.where(prior > 0, joint / np.where(prior > 0, prior, 1.0), 0.0)
        log_marginal = logsumexp(np.log(joint), axis=1)
        expected = xlogy(q, likelihood).sum(axis=1)
        kl = rel_entr(q, prior[None, :]).sum(axis=1)
    elbo = expected - kl
    if x is not None:
        return ElboTerms(float(elbo[x]), float(log_marginal[x]), float(kl[x]))
    return ElboTerms(elbo, log_marginal, kl)
