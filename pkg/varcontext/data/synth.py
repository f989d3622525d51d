"""Seeded synthetic referring-expression world.

Scenes hold boxes with a category, a color and a size class. Expressions are
produced from templates (category, attribute, superlative, relation) and are
kept only when they identify exactly one region. Every referent shares its
category with `distractors` other regions, so the category word alone never
suffices.

`parse_expression` and `resolve_expression` form an independent brute-force
evaluator that re-derives the referent from the words and the scene alone.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple
import logging

import numpy as np

from varcontext.data.features import build_region_features, make_feature
from varcontext.data.types import Box, ExpressionRecord, ReferringDataset, Region, Scene
from varcontext.errors import ConfigError

logger = logging.getLogger(__name__)

TEMPLATES = ("category", "attribute", "superlative", "relation")
RELATIONS = ("left-of", "right-of", "above", "below", "largest", "smallest")
_RELATION_WORDS = {"left-of": ("left", "of"), "right-of": ("right", "of"), "above": ("above",), "below": ("below",)}
_SIZE_SIDES = {0: (16.0, 28.0), 1: (32.0, 48.0), 2: (56.0, 72.0)}
# Fraction of the image that rejection sampling reliably fills with boxes.
PACKING_DENSITY = 0.4
PLACEMENT_RETRIES = 20


@dataclass(kw_only=True)
class SynthConfig:
    """Parameters of a synthetic world."""
    object_count: Tuple[int, int] = (4, 8)
    categories: Tuple[str, ...] = ("cube", "sphere", "cylinder", "cone")
    colors: Tuple[str, ...] = ("red", "green", "blue", "yellow")
    sizes: Tuple[str, ...] = ("small", "medium", "large")
    relations: Tuple[str, ...] = RELATIONS
    templates: Tuple[str, ...] = ("attribute", "superlative", "relation")
    distractors: int = 2
    expressions_per_scene: int = 2
    train_scenes: int = 2000
    test_scenes: int = 500
    val_scenes: int = 0
    visual_dim: int = 16
    noise: float = 0.05
    image_width: float = 480.0
    image_height: float = 320.0
    seed: int = 0

    def problems(self) -> List[Tuple[Tuple[str, ...], str]]:
        """Every invalid setting, each with the keys it involves."""
        problems: List[Tuple[Tuple[str, ...], str]] = []
        if not self.categories or not self.colors or not self.sizes:
            problems.append((("categories", "colors", "sizes"),
                             "category, color and size alphabets must be non-empty"))
        if len(self.sizes) > len(_SIZE_SIDES):
            problems.append((("sizes",), f"at most {len(_SIZE_SIDES)} size classes are supported"))
        low, high = self.object_count
        if low < 1 or high < low:
            problems.append((("object_count",), f"object_count must satisfy 1 <= min <= max, got {self.object_count}"))
        code = len(self.categories) + len(self.colors) + len(self.sizes)
        if self.visual_dim < code:
            problems.append((("visual_dim",), f"visual_dim {self.visual_dim} cannot hold the {code}-d attribute code"))
        unknown = [r for r in self.relations if r not in RELATIONS]
        unknown += [t for t in self.templates if t not in TEMPLATES]
        if unknown:
            problems.append((("relations", "templates"), f"unknown relations or templates: {unknown}"))
        if self.distractors < 0 or self.expressions_per_scene < 1:
            problems.append((("distractors", "expressions_per_scene"),
                             "distractors must be >= 0 and expressions_per_scene >= 1"))
        if self.sizes and len(self.sizes) <= len(_SIZE_SIDES) and high >= 1:
            problems.extend(self._placement_problems(high))
        return problems

    def _placement_problems(self, high: int) -> List[Tuple[Tuple[str, ...], str]]:
        """Boxes of every size class must fit, and `high` boxes must pack loosely."""
        largest = _SIZE_SIDES[len(self.sizes) - 1][1]
        if min(self.image_width, self.image_height) < largest:
            return [(("image_width", "image_height", "sizes"),
                     f"a {self.image_width:g}x{self.image_height:g} image cannot hold a box of side {largest:g}")]
        expected = high * np.mean([((lo + hi) / 2.0) ** 2 for lo, hi in
                                   (_SIZE_SIDES[k] for k in range(len(self.sizes)))])
        room = PACKING_DENSITY * self.image_width * self.image_height
        if expected > room:
            return [(("object_count", "image_width", "image_height"),
                     f"{high} objects need about {expected:.0f} px^2 of boxes but a "
                     f"{self.image_width:g}x{self.image_height:g} image packs at most {room:.0f}")]
        return []

    def validate(self) -> None:
        problems = self.problems()
        if problems:
            raise ConfigError("Invalid synthetic world configuration: " + "; ".join(m for _, m in problems))


@dataclass
class SynthReport:
    scenes: int = 0
    expressions: int = 0
    skipped: int = 0
    skipped_scenes: int = 0
    skipped_by_reason: Dict[str, int] = field(default_factory=dict)


# ---------------------------------------------------------------------- #
#  SCENE CONSTRUCTION                                                     #
# ---------------------------------------------------------------------- #

def _place_boxes(rng: np.random.Generator, size_classes: Sequence[int], width: float, height: float,
                 attempts: int = 500) -> Optional[List[Box]]:
    boxes: List[Box] = []
    for size_class in size_classes:
        low, high = _SIZE_SIDES[size_class]
        for _ in range(attempts):
            w, h = rng.uniform(low, high), rng.uniform(low, high)
            x, y = rng.uniform(0.0, width - w), rng.uniform(0.0, height - h)
            box = Box(float(round(x, 2)), float(round(y, 2)),
                      float(min(round(x + w, 2), width)), float(min(round(y + h, 2), height)))
            if all(box.x_br <= b.x_tl or b.x_br <= box.x_tl or box.y_br <= b.y_tl or b.y_br <= box.y_tl
                   for b in boxes):
                boxes.append(box)
                break
        else:
            return None
    return boxes


def _visual_code(config: SynthConfig, rng: np.random.Generator, category: int, color: int, size: int) -> np.ndarray:
    code = np.zeros(config.visual_dim)
    offset_color = len(config.categories)
    offset_size = offset_color + len(config.colors)
    code[category] = 1.0
    code[offset_color + color] = 1.0
    code[offset_size + size] = 1.0
    code += rng.normal(0.0, config.noise, size=config.visual_dim)
    return code.astype(np.float32).astype(np.float64)


def _build_scene(config: SynthConfig, rng: np.random.Generator, scene_id: int) -> Optional[Tuple[Scene, int]]:
    """Draw one scene; returns it with the index of its distractor category.

    Returns None when the boxes could not be placed within `PLACEMENT_RETRIES`
    draws.
    """
    n = int(rng.integers(config.object_count[0], config.object_count[1] + 1))
    focus = int(rng.integers(len(config.categories)))
    group = min(config.distractors + 1, n)
    categories = [focus] * group + [int(c) for c in rng.integers(len(config.categories), size=n - group)]
    colors = [int(c) for c in rng.integers(len(config.colors), size=n)]
    sizes = [int(s) for s in rng.integers(len(config.sizes), size=n)]
    boxes = None
    for _ in range(PLACEMENT_RETRIES):
        boxes = _place_boxes(rng, sizes, config.image_width, config.image_height)
        if boxes is not None:
            break
    if boxes is None:
        logger.debug("Scene %d: could not place %d boxes", scene_id, n)
        return None
    order = rng.permutation(n)
    regions = []
    for region_id, k in enumerate(order):
        visual = _visual_code(config, rng, categories[k], colors[k], sizes[k])
        category = config.categories[categories[k]]
        regions.append(Region(id=region_id, box=boxes[k], feature=make_feature(visual, category),
                               category=category,
                               attributes={"color": config.colors[colors[k]], "size": config.sizes[sizes[k]]}))
    build_region_features(regions, config.image_width, config.image_height)
    return Scene(id=scene_id, width=config.image_width, height=config.image_height, regions=regions), focus


# ---------------------------------------------------------------------- #
#  EXPRESSION GENERATION                                                  #
# ---------------------------------------------------------------------- #

def _holds(relation: str, subject: Box, landmark: Box) -> bool:
    (sx, sy), (lx, ly) = subject.center, landmark.center
    return {"left-of": sx < lx, "right-of": sx > lx, "above": sy < ly, "below": sy > ly}[relation]


def _candidate_phrases(config: SynthConfig, scene: Scene, referent: int, template: str,
                       rng: np.random.Generator) -> List[Tuple[List[str], List[int]]]:
    """Every phrase a template can express for `referent`, with the regions it matches."""
    regions = scene.regions
    target = regions[referent]
    same = [i for i, r in enumerate(regions) if r.category == target.category]
    phrases: List[Tuple[List[str], List[int]]] = []
    if template == "category":
        phrases.append((["the", target.category], same))
    elif template == "attribute":
        color, size = target.attributes["color"], target.attributes["size"]
        phrases.append((["the", color, target.category],
                        [i for i in same if regions[i].attributes["color"] == color]))
        phrases.append((["the", size, target.category],
                        [i for i in same if regions[i].attributes["size"] == size]))
        phrases.append((["the", size, color, target.category],
                        [i for i in same if regions[i].attributes["size"] == size
                         and regions[i].attributes["color"] == color]))
    elif template == "superlative":
        areas = {i: regions[i].box.area for i in same}
        for word, pick in (("largest", max), ("smallest", min)):
            if word in config.relations:
                best = pick(areas.values())
                phrases.append((["the", word, target.category], [i for i, a in areas.items() if a == best]))
    elif template == "relation":
        for landmark_index, landmark in enumerate(regions):
            if landmark.category == target.category:
                continue
            color = landmark.attributes["color"]
            twins = [r for r in regions if r.category == landmark.category and r.attributes["color"] == color]
            if len(twins) != 1:
                continue
            for relation, words in _RELATION_WORDS.items():
                if relation not in config.relations:
                    continue
                matches = [i for i in same if _holds(relation, regions[i].box, landmark.box)]
                phrases.append((["the", target.category, *words, "the", color, landmark.category], matches))
    order = rng.permutation(len(phrases)) if phrases else []
    return [phrases[k] for k in order]


def _describe(config: SynthConfig, scene: Scene, referent: int, rng: np.random.Generator) -> Optional[List[str]]:
    templates = list(config.templates) if len(scene) > 1 else ["category"]
    for k in rng.permutation(len(templates)):
        for words, matches in _candidate_phrases(config, scene, referent, templates[k], rng):
            if matches == [referent]:
                return words
    return None


def synth_world(config: SynthConfig) -> Tuple[ReferringDataset, SynthReport]:
    """Generate a deterministic synthetic dataset.

    Args:
        config (SynthConfig): World parameters; `seed` fixes everything.

    Returns:
        Tuple[ReferringDataset, SynthReport]: The dataset and generation counts.
    """
    config.validate()
    if config.object_count[1] == 1:
        logger.warning("Every scene holds a single object; context is unnecessary in this world")
    rng = np.random.default_rng(config.seed)
    report = SynthReport()
    scenes: Dict[int, Scene] = {}
    expressions: List[ExpressionRecord] = []
    splits: Dict[str, List[int]] = {}
    plan = [("train", config.train_scenes), ("test", config.test_scenes), ("val", config.val_scenes)]
    scene_id = 0
    for split_name, count in plan:
        if count <= 0:
            continue
        ids = splits.setdefault(split_name, [])
        for _ in range(count):
            built = _build_scene(config, rng, scene_id)
            if built is None:
                report.skipped_scenes += 1
                reason = "no box placement"
                report.skipped_by_reason[reason] = report.skipped_by_reason.get(reason, 0) + 1
                continue
            scene, focus = built
            scenes[scene_id] = scene
            report.scenes += 1
            pool = [i for i, r in enumerate(scene.regions) if r.category == config.categories[focus]]
            for _ in range(config.expressions_per_scene):
                referent = int(pool[int(rng.integers(len(pool)))])
                words = _describe(config, scene, referent, rng)
                if words is None:
                    report.skipped += 1
                    reason = "no unique template"
                    report.skipped_by_reason[reason] = report.skipped_by_reason.get(reason, 0) + 1
                    continue
                expression = ExpressionRecord(id=len(expressions), scene_id=scene_id, words=tuple(words),
                                              referent_index=referent)
                expressions.append(expression)
                ids.append(expression.id)
                report.expressions += 1
            scene_id += 1
    if report.skipped_scenes:
        logger.warning("Skipped %d scenes whose boxes could not be placed", report.skipped_scenes)
    if report.skipped:
        logger.warning("Skipped %d expressions with no uniquely identifying template", report.skipped)
    dataset = ReferringDataset(scenes=scenes, expressions=expressions, splits=splits,
                               categories=sorted(config.categories))
    logger.info("Synthesized %d scenes, %d expressions", report.scenes, report.expressions)
    return dataset, report


# ---------------------------------------------------------------------- #
#  BRUTE-FORCE EVALUATOR                                                  #
# ---------------------------------------------------------------------- #

@dataclass
class Query:
    category: str
    color: Optional[str] = None
    size: Optional[str] = None
    superlative: Optional[str] = None
    relation: Optional[str] = None
    landmark: Optional["Query"] = None


def _parse_noun_phrase(words: List[str], pos: int, config: SynthConfig) -> Tuple[Query, int]:
    if pos >= len(words) or words[pos] != "the":
        raise ValueError(f"expected 'the' at position {pos} in {words}")
    pos += 1
    superlative = size = color = None
    if pos < len(words) and words[pos] in ("largest", "smallest"):
        superlative, pos = words[pos], pos + 1
    if pos < len(words) and words[pos] in config.sizes:
        size, pos = words[pos], pos + 1
    if pos < len(words) and words[pos] in config.colors:
        color, pos = words[pos], pos + 1
    if pos >= len(words) or words[pos] not in config.categories:
        raise ValueError(f"expected a category at position {pos} in {words}")
    return Query(category=words[pos], color=color, size=size, superlative=superlative), pos + 1


def parse_expression(words: Sequence[str], config: SynthConfig) -> Query:
    """Parse template words into a query; raises ValueError on other text."""
    words = list(words)
    query, pos = _parse_noun_phrase(words, 0, config)
    if pos == len(words):
        return query
    for relation, phrase in _RELATION_WORDS.items():
        if tuple(words[pos:pos + len(phrase)]) == phrase:
            query.relation = relation
            query.landmark, end = _parse_noun_phrase(words, pos + len(phrase), config)
            if end != len(words):
                raise ValueError(f"trailing words in {words}")
            return query
    raise ValueError(f"unrecognized relation in {words}")


def resolve_expression(query: Query, scene: Scene) -> List[int]:
    """All region indices the query denotes, by exhaustive filtering."""
    found = []
    for index, region in enumerate(scene.regions):
        if region.category != query.category:
            continue
        if query.color is not None and region.attributes.get("color") != query.color:
            continue
        if query.size is not None and region.attributes.get("size") != query.size:
            continue
        found.append(index)
    if query.superlative is not None and found:
        areas = [(scene.regions[i].box.x_br - scene.regions[i].box.x_tl)
                 * (scene.regions[i].box.y_br - scene.regions[i].box.y_tl) for i in found]
        extreme = max(areas) if query.superlative == "largest" else min(areas)
        found = [i for i, a in zip(found, areas) if a == extreme]
    if query.relation is not None:
        landmarks = resolve_expression(query.landmark, scene)
        if len(landmarks) != 1:
            return []
        lm = scene.regions[landmarks[0]].box
        lx, ly = (lm.x_tl + lm.x_br) / 2.0, (lm.y_tl + lm.y_br) / 2.0
        kept = []
        for i in found:
            b = scene.regions[i].box
            x, y = (b.x_tl + b.x_br) / 2.0, (b.y_tl + b.y_br) / 2.0
            if ((query.relation == "left-of" and x < lx) or (query.relation == "right-of" and x > lx)
                    or (query.relation == "above" and y < ly) or (query.relation == "below" and y > ly)):
                kept.append(i)
        found = kept
    return found


def category_matches(scene: Scene, referent: int) -> List[int]:
    """Regions a category-only matcher would accept for the referent."""
    category = scene.regions[referent].category
    return [i for i, r in enumerate(scene.regions) if r.category == category]
