"""Scenes, region features, annotation files and the synthetic world."""
from .types import Box, RegionFeature, Region, Scene, ExpressionRecord, ReferringDataset, MAX_TOKENS
from .features import spatial_feature, visdif_feature, build_region_features
from .annotations import load_annotations, save_annotations, read_feature_matrix, write_feature_matrix, tokenize
from .synth import SynthConfig, SynthReport, synth_world, parse_expression, resolve_expression, category_matches

__all__ = [
    "Box", "RegionFeature", "Region", "Scene", "ExpressionRecord", "ReferringDataset", "MAX_TOKENS",
    "spatial_feature", "visdif_feature", "build_region_features",
    "load_annotations", "save_annotations", "read_feature_matrix", "write_feature_matrix", "tokenize",
    "SynthConfig", "SynthReport", "synth_world", "parse_expression", "resolve_expression", "category_matches",
]
