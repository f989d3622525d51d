"""Score networks shared by the grounding heads.

Both networks modulate an fc projection of visual input by a language cue,
L2-normalize the product and map it to a scalar with a final fc layer.
"""
from typing import Tuple
import logging

from varcontext.compute import Parameter, ParameterStore, Tensor, concat, fc, l2norm

logger = logging.getLogger(__name__)


def _squeeze_last(t: Tensor) -> Tensor:
    return t.reshape(t.shape[:-1])


class TwoBranchScorer:
    """s = fc(l2norm(y1 * fc(single))) + fc(l2norm(y2 * fc([left, right]))).

    Args:
        store (ParameterStore): Parameter owner.
        name (str): Block prefix under ``comprehension.``.
        feature_dim (int): D_x of one region feature.
        embedding_dim (int): D_w of the language cues.
    """

    def __init__(self, store: ParameterStore, name: str, feature_dim: int, embedding_dim: int):
        prefix = f"comprehension.{name}"
        self.single: Tuple[Parameter, Parameter] = store.linear(f"{prefix}.single", embedding_dim, feature_dim)
        self.pair = store.linear(f"{prefix}.pair", embedding_dim, 2 * feature_dim)
        self.single_out = store.linear(f"{prefix}.single_out", 1, embedding_dim)
        self.pair_out = store.linear(f"{prefix}.pair_out", 1, embedding_dim)

    def single_score(self, single: Tensor, y1: Tensor) -> Tensor:
        m = y1 * fc(single, *self.single)
        return _squeeze_last(fc(l2norm(m), *self.single_out))

    def pair_score(self, left: Tensor, right: Tensor, y2: Tensor) -> Tensor:
        m = y2 * fc(concat([left, right], axis=-1), *self.pair)
        return _squeeze_last(fc(l2norm(m), *self.pair_out))

    def __call__(self, single: Tensor, left: Tensor, right: Tensor, y1: Tensor, y2: Tensor) -> Tensor:
        return self.single_score(single, y1) + self.pair_score(left, right, y2)


class OneBranchScorer:
    """s = fc(l2norm(y * fc(z)))."""

    def __init__(self, store: ParameterStore, name: str, feature_dim: int, embedding_dim: int):
        prefix = f"comprehension.{name}"
        self.inner = store.linear(f"{prefix}.inner", embedding_dim, feature_dim)
        self.out = store.linear(f"{prefix}.out", 1, embedding_dim)

    def __call__(self, z: Tensor, y: Tensor) -> Tensor:
        return _squeeze_last(fc(l2norm(y * fc(z, *self.inner)), *self.out))
