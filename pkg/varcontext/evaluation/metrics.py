"""Grounding accuracy, IoU, BLEU and the head comparison report."""
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple
import logging
import math

from tqdm import tqdm

from varcontext.data import Box, ExpressionRecord, ReferringDataset
from varcontext.errors import ValidationError

logger = logging.getLogger(__name__)

COARSE_BUCKETS = ("1-2", "3-5", "6+")


def iou(a: Box, b: Box) -> float:
    """Intersection over union of two boxes, in [0, 1]."""
    inter_w = min(a.x_br, b.x_br) - max(a.x_tl, b.x_tl)
    inter_h = min(a.y_br, b.y_br) - max(a.y_tl, b.y_tl)
    if inter_w <= 0 or inter_h <= 0:
        return 0.0
    inter = inter_w * inter_h
    union = a.area + b.area - inter
    return inter / union if union > 0 else 0.0


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _closest_length(candidate_length: int, references: Sequence[Sequence[str]]) -> int:
    return min((abs(len(r) - candidate_length), len(r)) for r in references)[1]


def bleu_n(candidate: Sequence[str], references: Sequence[Sequence[str]], n: int = 2) -> float:
    """Sentence-level BLEU up to order `n` with brevity penalty.

    Clipped n-gram precisions are combined by geometric mean; the reference
    length is the one closest to the candidate's. An empty candidate, or a
    zero precision at any order, scores 0.
    """
    if n not in (1, 2):
        raise ValueError(f"bleu_n supports n in (1, 2), got {n}")
    if not candidate or not references:
        return 0.0
    log_precision = 0.0
    for order in range(1, n + 1):
        counts = _ngrams(candidate, order)
        total = sum(counts.values())
        if total == 0:
            return 0.0
        max_ref: Counter = Counter()
        for reference in references:
            for gram, count in _ngrams(reference, order).items():
                max_ref[gram] = max(max_ref[gram], count)
        clipped = sum(min(count, max_ref[gram]) for gram, count in counts.items())
        if clipped == 0:
            return 0.0
        log_precision += math.log(clipped / total) / n
    c = len(candidate)
    r = _closest_length(c, references)
    penalty = 1.0 if c > r else math.exp(1.0 - r / c)
    return penalty * math.exp(log_precision)


def corpus_bleu(candidates: Sequence[Sequence[str]], references: Sequence[Sequence[Sequence[str]]],
                n: int = 2) -> float:
    """Mean sentence-level BLEU over a list of candidates."""
    if not candidates:
        return 0.0
    return sum(bleu_n(c, r, n) for c, r in zip(candidates, references)) / len(candidates)


def coarse_bucket(region_count: int) -> str:
    if region_count <= 2:
        return "1-2"
    if region_count <= 5:
        return "3-5"
    return "6+"


@dataclass
class EvalReport:
    """Grounding accuracy of one split, with per-region-count buckets.

    `buckets` maps an exact region count to (correct, total). `bleu1` and
    `bleu2` stay None unless `add_generation_bleu` scored the model's
    generated expressions on the same split.
    """
    split: str
    accuracy: float
    count: int
    buckets: Dict[int, Tuple[int, int]] = field(default_factory=dict)
    bleu1: Optional[float] = None
    bleu2: Optional[float] = None
    predictions: Dict[int, int] = field(default_factory=dict)

    def bucket_accuracy(self) -> Dict[int, float]:
        return {n: (c / t if t else 0.0) for n, (c, t) in sorted(self.buckets.items())}

    def coarse_buckets(self) -> Dict[str, Tuple[int, int]]:
        grouped = {name: [0, 0] for name in COARSE_BUCKETS}
        for n, (correct, total) in self.buckets.items():
            slot = grouped[coarse_bucket(n)]
            slot[0] += correct
            slot[1] += total
        return {name: (c, t) for name, (c, t) in grouped.items()}


def _grade(model, dataset: ReferringDataset, expression: ExpressionRecord, threshold: float) -> Tuple[int, int, bool]:
    scene = dataset.scene_of(expression)
    predicted = model.predict(scene, expression)
    truth = scene.regions[expression.referent_index].box
    return len(scene), predicted, iou(scene.regions[predicted].box, truth) > threshold


def grounding_accuracy(model, dataset: ReferringDataset, split: Optional[str] = "test", threshold: float = 0.5,
                       workers: int = 1, show_progress: bool = False) -> EvalReport:
    """Fraction of expressions whose top-scored region has IoU > `threshold` with the referent.

    Expressions without a referent are skipped. With `workers > 1` the
    expressions are scored on a thread pool; the report is independent of
    the worker count.
    """
    expressions = [e for e in dataset.split(split) if e.referent_index is not None]
    skipped = len(dataset.split(split)) - len(expressions)
    if skipped:
        logger.info("Skipping %d expressions without a referent", skipped)

    def grade(expression: ExpressionRecord):
        return _grade(model, dataset, expression, threshold)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            graded = list(tqdm(pool.map(grade, expressions), total=len(expressions), desc="eval",
                               disable=not show_progress))
    else:
        graded = [grade(e) for e in tqdm(expressions, desc="eval", disable=not show_progress)]

    buckets: Dict[int, List[int]] = {}
    predictions = {}
    hits = 0
    for expression, (n, predicted, correct) in zip(expressions, graded):
        slot = buckets.setdefault(n, [0, 0])
        slot[0] += int(correct)
        slot[1] += 1
        hits += int(correct)
        predictions[expression.id] = predicted
    count = len(expressions)
    report = EvalReport(split=split or "all", accuracy=hits / count if count else 0.0, count=count,
                        buckets={n: (c, t) for n, (c, t) in sorted(buckets.items())}, predictions=predictions)
    logger.info("Grounding accuracy on %s: %.4f over %d expressions", report.split, report.accuracy, count)
    return report


def reference_sets(dataset: ReferringDataset) -> Dict[Tuple[int, int], List[Sequence[str]]]:
    """Every expression for each (scene, referent) pair."""
    refs: Dict[Tuple[int, int], List[Sequence[str]]] = {}
    for e in dataset.expressions:
        if e.referent_index is not None:
            refs.setdefault((e.scene_id, e.referent_index), []).append(e.words)
    return refs


def add_generation_bleu(report: EvalReport, candidates: Sequence[Sequence[str]],
                        references: Sequence[Sequence[Sequence[str]]]) -> EvalReport:
    """Set `report.bleu1`/`bleu2` to the corpus BLEU of `candidates`."""
    report.bleu1 = corpus_bleu(candidates, references, 1)
    report.bleu2 = corpus_bleu(candidates, references, 2)
    return report


def compare_heads(dataset: ReferringDataset, models: Dict[str, object], split: Optional[str] = "test",
                  threshold: float = 0.5, fingerprints: Optional[Dict[str, str]] = None) -> List[Dict[str, object]]:
    """Accuracy per head per coarse region-count bucket.

    Args:
        models: Head label to model.
        fingerprints: Head label to the dataset fingerprint its checkpoint
            was trained on; every entry must match `dataset`.

    Returns:
        One row per (head, bucket), empty buckets included with count 0.

    Raises:
        ValidationError: A checkpoint was trained on a different dataset.
    """
    current = dataset.fingerprint()
    mismatched = [f"{label}: trained on {fp[:12]}, evaluating {current[:12]}"
                  for label, fp in (fingerprints or {}).items() if fp and fp != current]
    if mismatched:
        raise ValidationError("Checkpoints were trained on a different dataset", mismatched)
    rows: List[Dict[str, object]] = []
    for label, model in models.items():
        report = grounding_accuracy(model, dataset, split, threshold)
        for bucket, (correct, total) in report.coarse_buckets().items():
            rows.append({"head": label, "bucket": bucket, "count": total,
                         "accuracy": correct / total if total else 0.0})
    return rows
