"""Grounding heads and the factory that builds them by name."""
import importlib
from typing import Any

from .base_head import BaseHead, GroundingScores, MODES
from .scorers import OneBranchScorer, TwoBranchScorer
from .vc_head import VCHead, total_score, pair_grid
from .mil_head import MILHead, MaxPoolHead, NoisyOrHead
from .random_head import RandomHead

_HEADS = {
    "vc": ("varcontext.comprehension.vc_head", "VCHead"),
    "maxpool": ("varcontext.comprehension.mil_head", "MaxPoolHead"),
    "noisyor": ("varcontext.comprehension.mil_head", "NoisyOrHead"),
    "random": ("varcontext.comprehension.random_head", "RandomHead"),
}

HEAD_NAMES = tuple(_HEADS)


def create_head(name: str, *args: Any, **kwargs: Any) -> BaseHead:
    """Instantiate the head registered under `name`."""
    if name not in _HEADS:
        raise ValueError(f"Unsupported head: {name}. Expected one of {HEAD_NAMES}")
    module_name, class_name = _HEADS[name]
    module = importlib.import_module(module_name)
    return getattr(module, class_name)(*args, **kwargs)


__all__ = [
    "BaseHead", "GroundingScores", "MODES", "OneBranchScorer", "TwoBranchScorer",
    "VCHead", "total_score", "pair_grid", "MILHead", "MaxPoolHead", "NoisyOrHead", "RandomHead",
    "create_head", "HEAD_NAMES",
]
