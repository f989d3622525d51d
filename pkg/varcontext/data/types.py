"""Scene, region and expression records."""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple
import hashlib
import json
import logging

import numpy as np

from varcontext.errors import ValidationError

logger = logging.getLogger(__name__)

MAX_TOKENS = 20


@dataclass(frozen=True)
class Box:
    """Axis-aligned box in pixels, top-left and bottom-right corners."""
    x_tl: float
    y_tl: float
    x_br: float
    y_br: float

    @property
    def width(self) -> float:
        return self.x_br - self.x_tl

    @property
    def height(self) -> float:
        return self.y_br - self.y_tl

    @property
    def area(self) -> float:
        return max(self.width, 0.0) * max(self.height, 0.0)

    @property
    def center(self) -> Tuple[float, float]:
        return (self.x_tl + self.x_br) / 2.0, (self.y_tl + self.y_br) / 2.0

    def is_degenerate(self) -> bool:
        return not (self.x_tl < self.x_br and self.y_tl < self.y_br)

    def within(self, width: float, height: float) -> bool:
        return 0 <= self.x_tl and 0 <= self.y_tl and self.x_br <= width and self.y_br <= height

    def clamp(self, width: float, height: float) -> "Box":
        return Box(min(max(self.x_tl, 0.0), width), min(max(self.y_tl, 0.0), height),
                   min(max(self.x_br, 0.0), width), min(max(self.y_br, 0.0), height))

    def as_list(self) -> List[float]:
        return [self.x_tl, self.y_tl, self.x_br, self.y_br]


@dataclass
class RegionFeature:
    """Visual, visdif and 5-d spatial parts of one region's feature x_i."""
    visual: np.ndarray
    spatial: np.ndarray
    visdif: Optional[np.ndarray] = None
    category: Optional[str] = None

    def vector(self, use_visdif: bool = True) -> np.ndarray:
        parts = [self.visual]
        if use_visdif:
            parts.append(self.visdif if self.visdif is not None else np.zeros_like(self.visual))
        parts.append(self.spatial)
        return np.concatenate(parts).astype(np.float64)


@dataclass
class Region:
    id: int
    box: Box
    feature: RegionFeature
    category: Optional[str] = None
    attributes: Dict[str, str] = field(default_factory=dict)


@dataclass
class Scene:
    """One image: its extents, ordered candidate regions and optional global feature I."""
    id: int
    width: float
    height: float
    regions: List[Region]
    global_feature: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.regions)

    def region_index(self, region_id: int) -> int:
        for index, region in enumerate(self.regions):
            if region.id == region_id:
                return index
        raise KeyError(region_id)

    def feature_matrix(self, use_visdif: bool = True) -> np.ndarray:
        return np.stack([r.feature.vector(use_visdif) for r in self.regions])

    def global_vector(self, use_visdif: bool = True) -> np.ndarray:
        """I; the mean of region features when the scene carries none."""
        if self.global_feature is not None:
            return np.asarray(self.global_feature, dtype=np.float64)
        return self.feature_matrix(use_visdif).mean(axis=0)


@dataclass
class ExpressionRecord:
    """A referring expression; `words` are truncated to 20 tokens."""
    id: int
    scene_id: int
    words: Tuple[str, ...]
    raw: str = ""
    referent_index: Optional[int] = None

    def __post_init__(self):
        words = tuple(self.words)
        if len(words) > MAX_TOKENS:
            logger.debug("Expression %s truncated from %d to %d tokens", self.id, len(words), MAX_TOKENS)
            words = words[:MAX_TOKENS]
        self.words = words
        if not self.raw:
            self.raw = " ".join(words)

    def token_ids(self, vocabulary, pad_to: int = MAX_TOKENS) -> np.ndarray:
        """Word ids padded with the pad id to `pad_to`."""
        ids = [vocabulary.id_of(w) for w in self.words]
        ids += [vocabulary.pad_id] * (pad_to - len(ids))
        return np.asarray(ids, dtype=np.int64)


@dataclass
class ReferringDataset:
    """Immutable collection of scenes, expressions and named splits."""
    scenes: Dict[int, Scene]
    expressions: List[ExpressionRecord]
    splits: Dict[str, List[int]] = field(default_factory=dict)
    categories: List[str] = field(default_factory=list)

    def __post_init__(self):
        self._by_id = {e.id: e for e in self.expressions}

    def __len__(self) -> int:
        return len(self.expressions)

    def expression(self, expression_id: int) -> ExpressionRecord:
        return self._by_id[expression_id]

    def scene_of(self, expression: ExpressionRecord) -> Scene:
        return self.scenes[expression.scene_id]

    def split(self, name: Optional[str]) -> List[ExpressionRecord]:
        if name is None:
            return list(self.expressions)
        if name not in self.splits:
            raise ValidationError(f"Unknown split '{name}'", [f"available splits: {sorted(self.splits)}"])
        return [self._by_id[i] for i in self.splits[name]]

    def has_referents(self, name: Optional[str] = None) -> bool:
        return all(e.referent_index is not None for e in self.split(name))

    def fingerprint(self) -> str:
        """SHA-256 over the canonical serialization of records and visual features."""
        digest = hashlib.sha256()
        for scene in self.scenes.values():
            head = [scene.id, scene.width, scene.height]
            digest.update(json.dumps(head).encode("utf-8"))
            for region in scene.regions:
                record = [region.id, region.box.as_list(), region.category, sorted(region.attributes.items())]
                digest.update(json.dumps(record).encode("utf-8"))
                digest.update(np.ascontiguousarray(region.feature.visual, dtype="<f8").tobytes())
        for e in self.expressions:
            digest.update(json.dumps([e.id, e.scene_id, list(e.words), e.referent_index]).encode("utf-8"))
        digest.update(json.dumps(sorted(self.splits.items())).encode("utf-8"))
        return digest.hexdigest()

    def summary(self) -> Dict[str, int]:
        counts = {f"split_{name}": len(ids) for name, ids in sorted(self.splits.items())}
        counts.update({"scenes": len(self.scenes), "expressions": len(self.expressions),
                       "regions": sum(len(s) for s in self.scenes.values())})
        return counts
