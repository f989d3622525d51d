"""Metrics, MIL aggregation and the variational-bound oracle."""
from .metrics import (iou, bleu_n, corpus_bleu, coarse_bucket, EvalReport, grounding_accuracy, compare_heads,
                      reference_sets, add_generation_bleu, COARSE_BUCKETS)
from .mil import mil_maxpool_score, mil_noisyor_score
from .oracles import ToyJoint, ElboTerms, elbo_oracle, MAX_CONFIGURATIONS

__all__ = [
    "iou", "bleu_n", "corpus_bleu", "coarse_bucket", "EvalReport", "grounding_accuracy", "compare_heads",
    "reference_sets", "add_generation_bleu", "COARSE_BUCKETS", "mil_maxpool_score", "mil_noisyor_score",
    "ToyJoint", "ElboTerms", "elbo_oracle", "MAX_CONFIGURATIONS",
]
