"""Chance baseline: seeded random scores per expression."""
from typing import Any, Callable, Optional
import zlib

import numpy as np

from varcontext.compute import Tensor
from varcontext.comprehension.base_head import BaseHead, GroundingScores
from varcontext.language import CueFeatures


class RandomHead(BaseHead):
    """Scores regions with standard normal draws keyed by (seed, expression id)."""
    name = "random"

    def __init__(self, *_args: Any, seed: int = 0, **_kwargs: Any):
        self.seed = seed

    def score(self, X: Tensor, cues: Optional[CueFeatures] = None, mode: str = "plain",
              psi_fn: Optional[Callable[[Tensor, Tensor], Tensor]] = None, key: Any = None) -> GroundingScores:
        stream = zlib.crc32(str(key).encode("utf-8"))
        rng = np.random.default_rng([self.seed, stream])
        return GroundingScores.from_total(Tensor(rng.standard_normal(X.shape[0])), mode=mode)
