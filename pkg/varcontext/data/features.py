"""Region feature construction: 5-d spatial attributes and visdif."""
from typing import List, Optional, Sequence
import logging

import numpy as np

from varcontext.data.types import Box, Region, RegionFeature
from varcontext.errors import DimensionError, ValidationError

logger = logging.getLogger(__name__)

EPS = 1e-8


def spatial_feature(box: Box, width: float, height: float) -> np.ndarray:
    """[x_tl/W, y_tl/H, x_br/W, y_br/H, (w*h)/(W*H)] for a valid in-image box."""
    if box.is_degenerate():
        raise ValidationError("Degenerate box", [f"box {box.as_list()} has non-positive extent"])
    if width <= 0 or height <= 0 or not box.within(width, height):
        raise ValidationError("Box outside image", [f"box {box.as_list()} not within {width}x{height}"])
    return np.array([
        box.x_tl / width,
        box.y_tl / height,
        box.x_br / width,
        box.y_br / height,
        (box.width * box.height) / (width * height),
    ], dtype=np.float64)


def visdif_feature(v_i: np.ndarray, others: Sequence[np.ndarray]) -> np.ndarray:
    """Mean of unit difference vectors (v_i - v_j) / ||v_i - v_j||.

    An empty comparison set gives the zero vector; pairs closer than EPS
    contribute zero but still count in the mean.
    """
    v_i = np.asarray(v_i, dtype=np.float64)
    if not others:
        return np.zeros_like(v_i)
    total = np.zeros_like(v_i)
    for v_j in others:
        v_j = np.asarray(v_j, dtype=np.float64)
        if v_j.shape != v_i.shape:
            raise DimensionError(f"visdif: dimension mismatch {v_j.shape} vs {v_i.shape}")
        diff = v_i - v_j
        norm = np.linalg.norm(diff)
        if norm >= EPS:
            total += diff / norm
    return total / len(others)


def comparison_set(index: int, regions: Sequence[Region]) -> List[np.ndarray]:
    """Visual vectors of the other regions sharing region `index`'s category.

    Without categories every other region is compared.
    """
    target = regions[index]
    if target.category is not None:
        return [r.feature.visual for j, r in enumerate(regions)
                if j != index and r.category == target.category]
    return [r.feature.visual for j, r in enumerate(regions) if j != index]


def build_region_features(regions: List[Region], width: float, height: float) -> None:
    """Fill spatial and visdif parts of every region feature in place."""
    for region in regions:
        region.feature.spatial = spatial_feature(region.box, width, height)
        region.feature.category = region.category
    for index, region in enumerate(regions):
        region.feature.visdif = visdif_feature(region.feature.visual, comparison_set(index, regions))


def make_feature(visual: np.ndarray, category: Optional[str] = None) -> RegionFeature:
    return RegionFeature(visual=np.asarray(visual, dtype=np.float64), spatial=np.zeros(5), category=category)
