"""Annotation file ingestion and serialization.

Annotation file (UTF-8 JSON)::

    {"images": [{"id", "width", "height",
                 "regions": [{"id", "bbox": [x_tl, y_tl, x_br, y_br],
                              "category"?, "attributes"?}]}],
     "expressions": [{"id", "image_id", "tokens" | "raw", "referent_region_id"?}],
     "splits": {"<name>": [expression ids]}}

Visual features live in a companion matrix ``<stem>.features.bin`` (magic
"VCF1", u32 count, u32 dim, count x dim float32, all little-endian) whose
row order is given by the sidecar ``<stem>.features.index.json`` as a list of
``[image_id, region_id]`` pairs.
"""
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple
import json
import logging
import re

import numpy as np

from varcontext.data.features import build_region_features, make_feature
from varcontext.data.types import Box, ExpressionRecord, ReferringDataset, Region, Scene
from varcontext.errors import ValidationError

logger = logging.getLogger(__name__)

FEATURE_MAGIC = b"VCF1"
_TOKEN_PATTERN = re.compile(r"[a-z0-9]+")


def tokenize(raw: str) -> List[str]:
    return _TOKEN_PATTERN.findall(raw.lower())


def feature_paths(path: Path) -> Tuple[Path, Path]:
    path = Path(path)
    stem = path.with_suffix("")
    return stem.with_name(stem.name + ".features.bin"), stem.with_name(stem.name + ".features.index.json")


# ---------------------------------------------------------------------- #
#  FEATURE MATRIX                                                         #
# ---------------------------------------------------------------------- #

def write_feature_matrix(path: Path, matrix: np.ndarray) -> None:
    matrix = np.ascontiguousarray(matrix, dtype="<f4")
    if matrix.ndim != 2:
        raise ValidationError("Feature matrix must be two-dimensional")
    header = np.array([matrix.shape[0], matrix.shape[1]], dtype="<u4")
    with open(path, "wb") as handle:
        handle.write(FEATURE_MAGIC)
        handle.write(header.tobytes())
        handle.write(matrix.tobytes())


def read_feature_matrix(path: Path) -> np.ndarray:
    payload = Path(path).read_bytes()
    if payload[:4] != FEATURE_MAGIC:
        raise ValidationError(f"{path}: not a VCF1 feature matrix")
    count, dim = (int(v) for v in np.frombuffer(payload, dtype="<u4", count=2, offset=4))
    expected = 12 + 4 * count * dim
    if len(payload) != expected:
        raise ValidationError(f"{path}: expected {expected} bytes for {count}x{dim}, found {len(payload)}")
    return np.frombuffer(payload, dtype="<f4", offset=12).reshape(count, dim).astype(np.float64)


def synthesize_visual(category: Optional[str], categories: List[str], visual_dim: int) -> np.ndarray:
    """One-hot category code over the sorted category list, fit to `visual_dim`."""
    code = np.zeros(max(visual_dim, len(categories)))
    if category is not None and category in categories:
        code[categories.index(category)] = 1.0
    return code[:visual_dim]


# ---------------------------------------------------------------------- #
#  LOADING                                                                #
# ---------------------------------------------------------------------- #

def _number(value: Any) -> Optional[float]:
    """`value` as a float, or None when it is missing or not numeric."""
    if isinstance(value, bool):
        return None
    try:
        return float(value)
    except (TypeError, ValueError):
        return None


def _parse_box(bbox: Any) -> Optional[Box]:
    if not isinstance(bbox, list) or len(bbox) != 4:
        return None
    coords = [_number(v) for v in bbox]
    if any(c is None or not np.isfinite(c) for c in coords):
        return None
    return Box(*coords)


def _parse_scenes(images: List[Any], issues: List[str]) -> Dict[int, Dict[str, Any]]:
    """Check image records; returns id -> {width, height, regions: [(record, Box)]}.

    Regions whose box cannot be read are left out of the result and reported.
    """
    seen: Dict[int, Dict[str, Any]] = {}
    for position, record in enumerate(images):
        if not isinstance(record, dict):
            issues.append(f"image record {position}: not an object")
            continue
        image_id = record.get("id")
        if image_id in seen:
            issues.append(f"image {image_id}: duplicate image id")
            continue
        width, height = _number(record.get("width")), _number(record.get("height"))
        if width is None or height is None:
            issues.append(f"image {image_id}: width and height must be numbers")
            width, height = width or 0.0, height or 0.0
        elif width <= 0 or height <= 0:
            issues.append(f"image {image_id}: non-positive extents {width}x{height}")
        regions = record.get("regions") or []
        if not regions:
            issues.append(f"image {image_id}: empty region list")
        region_ids = set()
        parsed = []
        for region in regions:
            if not isinstance(region, dict):
                issues.append(f"image {image_id}: region record is not an object")
                continue
            rid = region.get("id")
            if rid in region_ids:
                issues.append(f"image {image_id}, region {rid}: duplicate region id")
            region_ids.add(rid)
            bbox = region.get("bbox")
            box = _parse_box(bbox)
            if box is None:
                issues.append(f"image {image_id}, region {rid}: bbox must be four numeric coordinates, "
                              f"got {bbox!r}")
                continue
            if box.is_degenerate():
                issues.append(f"image {image_id}, region {rid}: degenerate box {bbox}")
            elif not box.within(width, height):
                issues.append(f"image {image_id}, region {rid}: box {bbox} outside {width:g}x{height:g}")
            parsed.append((region, box))
        seen[image_id] = {"width": width, "height": height, "regions": parsed}
    return seen


def load_annotations(path: Path, supervised: bool = False, visual_dim: int = 16) -> ReferringDataset:
    """Load and validate an annotation file and its companion features.

    Args:
        path (Path): Annotation JSON.
        supervised (bool): Require a referent on every expression.
        visual_dim (int): Dimension of synthesized features when no matrix exists.

    Returns:
        ReferringDataset: The validated dataset.

    Raises:
        ValidationError: With one itemized issue per violation.
    """
    path = Path(path)
    with open(path, "r", encoding="utf-8") as handle:
        document = json.load(handle)
    if not isinstance(document, dict):
        raise ValidationError(f"{path}: annotation file must hold a JSON object")
    issues: List[str] = []
    images = _parse_scenes(document.get("images") or [], issues)

    categories = sorted({r["category"] for img in images.values() for r, _ in img["regions"]
                         if r.get("category") is not None})

    matrix_path, index_path = feature_paths(path)
    rows: Dict[Tuple[int, int], np.ndarray] = {}
    if matrix_path.exists():
        matrix = read_feature_matrix(matrix_path)
        with open(index_path, "r", encoding="utf-8") as handle:
            index = json.load(handle)
        if len(index) != matrix.shape[0]:
            issues.append(f"{index_path.name}: {len(index)} index rows for {matrix.shape[0]} feature rows")
        for (image_id, region_id), row in zip(index, matrix):
            rows[(image_id, region_id)] = row
        logger.info("Loaded %d feature rows of dimension %d from %s", matrix.shape[0], matrix.shape[1],
                    matrix_path.name)

    scenes: Dict[int, Scene] = {}
    for image_id, parsed in images.items():
        regions = []
        for region, box in parsed["regions"]:
            rid = region.get("id")
            key = (image_id, rid)
            if rows:
                if key not in rows:
                    issues.append(f"image {image_id}, region {rid}: no row in feature matrix")
                    continue
                visual = rows[key]
            else:
                visual = synthesize_visual(region.get("category"), categories, visual_dim)
            regions.append(Region(id=rid, box=box,
                                  feature=make_feature(visual, region.get("category")),
                                  category=region.get("category"),
                                  attributes=dict(region.get("attributes") or {})))
        scenes[image_id] = Scene(id=image_id, width=parsed["width"], height=parsed["height"], regions=regions)

    expressions: List[ExpressionRecord] = []
    expression_ids = set()
    for position, record in enumerate(document.get("expressions") or []):
        if not isinstance(record, dict):
            issues.append(f"expression record {position}: not an object")
            continue
        eid = record.get("id", position)
        name = f"expression {eid}"
        if eid in expression_ids:
            issues.append(f"{name}: duplicate expression id")
            continue
        expression_ids.add(eid)
        image_id = record.get("image_id")
        if image_id not in scenes:
            issues.append(f"{name}: unknown image {image_id}")
            continue
        scene = scenes[image_id]
        words = record.get("tokens")
        raw = record.get("raw") or ""
        if words is not None and not (isinstance(words, list) and all(isinstance(w, str) for w in words)):
            issues.append(f"{name}: tokens must be a list of strings")
            continue
        if not isinstance(raw, str):
            issues.append(f"{name}: raw must be a string")
            continue
        words = [w.lower() for w in words] if words is not None else tokenize(raw)
        if not words:
            issues.append(f"{name}: no tokens")
            continue
        referent = None
        if record.get("referent_region_id") is not None:
            try:
                referent = scene.region_index(record["referent_region_id"])
            except KeyError:
                issues.append(f"{name}: referent region {record['referent_region_id']} not in image {image_id}")
                continue
        elif record.get("referent_index") is not None:
            index = record["referent_index"]
            if not isinstance(index, int) or isinstance(index, bool) or not 0 <= index < len(scene):
                issues.append(f"{name}: referent index {index!r} out of range for {len(scene)} regions")
                continue
            referent = index
        if supervised and referent is None:
            issues.append(f"{name}: missing referent in supervised mode")
        expressions.append(ExpressionRecord(id=eid, scene_id=image_id, words=tuple(words), raw=raw,
                                            referent_index=referent))

    splits = {name: list(ids) for name, ids in (document.get("splits") or {}).items()}
    for name, ids in splits.items():
        unknown = [i for i in ids if i not in expression_ids]
        if unknown:
            issues.append(f"split {name}: unknown expression ids {unknown[:5]}")

    if issues:
        raise ValidationError(f"{path}: {len(issues)} annotation issue(s)", issues)

    for scene in scenes.values():
        build_region_features(scene.regions, scene.width, scene.height)
    dataset = ReferringDataset(scenes=scenes, expressions=expressions, splits=splits, categories=categories)
    logger.info("Loaded %s: %s", path.name, dataset.summary())
    return dataset


# ---------------------------------------------------------------------- #
#  SAVING                                                                 #
# ---------------------------------------------------------------------- #

def to_document(dataset: ReferringDataset) -> Dict[str, Any]:
    images = []
    for scene in dataset.scenes.values():
        regions = []
        for region in scene.regions:
            entry: Dict[str, Any] = {"id": region.id, "bbox": region.box.as_list()}
            if region.category is not None:
                entry["category"] = region.category
            if region.attributes:
                entry["attributes"] = dict(sorted(region.attributes.items()))
            regions.append(entry)
        images.append({"id": scene.id, "width": scene.width, "height": scene.height, "regions": regions})
    expressions = []
    for e in dataset.expressions:
        entry = {"id": e.id, "image_id": e.scene_id, "tokens": list(e.words), "raw": e.raw}
        if e.referent_index is not None:
            entry["referent_region_id"] = dataset.scenes[e.scene_id].regions[e.referent_index].id
        expressions.append(entry)
    return {"images": images, "expressions": expressions, "splits": dataset.splits}


def save_annotations(dataset: ReferringDataset, path: Path) -> None:
    """Write the annotation JSON, the VCF1 matrix and its sidecar index."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(to_document(dataset), handle, separators=(",", ":"))
    index, rows = [], []
    for scene in dataset.scenes.values():
        for region in scene.regions:
            index.append([scene.id, region.id])
            rows.append(region.feature.visual)
    matrix_path, index_path = feature_paths(path)
    write_feature_matrix(matrix_path, np.stack(rows) if rows else np.zeros((0, 0)))
    with open(index_path, "w", encoding="utf-8") as handle:
        json.dump(index, handle, separators=(",", ":"))
    logger.info("Wrote %s with %d regions", path, len(rows))
