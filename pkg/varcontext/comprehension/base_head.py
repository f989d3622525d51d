#base_head.py
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Callable, Optional

import numpy as np

from varcontext.compute import Tensor, log_softmax, softmax
from varcontext.language import CueFeatures

MODES = ("plain", "with_generation", "wo_reg")


@dataclass
class GroundingScores:
    """Per-region score components, context and posterior of one expression."""
    total: Tensor
    posterior: Tensor
    log_posterior: Tensor
    s_theta: Optional[Tensor] = None
    s_phi: Optional[Tensor] = None
    s_omega: Optional[Tensor] = None
    s_omega_prime: Optional[Tensor] = None
    s_psi: Optional[Tensor] = None
    beta: Optional[Tensor] = None
    z: Optional[Tensor] = None
    pair: Optional[Tensor] = None
    mode: str = "plain"

    @classmethod
    def from_total(cls, total: Tensor, **components: Any) -> "GroundingScores":
        return cls(total=total, posterior=softmax(total), log_posterior=log_softmax(total), **components)

    def prediction(self) -> int:
        """Index of the highest-scoring region."""
        return int(np.argmax(self.total.data))

    def __len__(self) -> int:
        return self.total.shape[0]


class BaseHead(ABC):
    name = "base"

    @abstractmethod
    def score(self, X: Tensor, cues: CueFeatures, mode: str = "plain",
              psi_fn: Optional[Callable[[Tensor, Tensor], Tensor]] = None, key: Any = None) -> GroundingScores:
        pass

    def supports_generation(self) -> bool:
        return False

    def pair_scores(self, X: Tensor, cues: CueFeatures) -> Optional[Tensor]:
        return None
