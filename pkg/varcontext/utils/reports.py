"""CSV report writers and the single-file HTML summary.

Floats are written with 6 decimals so reports are byte-stable for a seed.
"""
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence
import csv
import html
import logging

import numpy as np

from varcontext.data import ExpressionRecord, ReferringDataset

logger = logging.getLogger(__name__)

EVAL_COLUMNS = ["split", "region_count", "count", "accuracy"]
COMPARISON_COLUMNS = ["head", "bucket", "count", "accuracy"]
GROUNDING_COLUMNS = ["expression_id", "region_id", "s_theta", "s_phi", "s_omega", "total", "posterior", "is_argmax"]
CONTEXT_COLUMNS = ["expression_id", "region_id", "rank", "context_region_id", "beta"]
ATTENTION_COLUMNS = ["expression_id", "cue", "word", "alpha"]
GENERATION_COLUMNS = ["expression_id", "region_id", "generated_text", "log_likelihood"]

CONTEXT_TOP_K = 3
CONTEXT_MIN_BETA = 0.1


def _fmt(value: Optional[float]) -> str:
    return "" if value is None else f"{float(value):.6f}"


def write_csv(path: Path, columns: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(columns)
        writer.writerows(rows)
    logger.info("Wrote %s", path)
    return path


def eval_rows(report) -> List[List[str]]:
    """One row for the whole split ("all") then one per exact region count."""
    rows = [[report.split, "all", str(report.count), _fmt(report.accuracy)]]
    for n, (correct, total) in sorted(report.buckets.items()):
        rows.append([report.split, str(n), str(total), _fmt(correct / total if total else 0.0)])
    return rows


def comparison_rows(rows: List[Dict[str, object]]) -> List[List[str]]:
    return [[str(r["head"]), str(r["bucket"]), str(r["count"]), _fmt(r["accuracy"])] for r in rows]


def _component(scores, name: str, i: int) -> str:
    value = getattr(scores, name)
    return "" if value is None else _fmt(value.data[i])


def grounding_rows(model, dataset: ReferringDataset, expressions: Iterable[ExpressionRecord]) -> List[List[str]]:
    """Per-region score components and posterior of every expression."""
    rows = []
    for expression in expressions:
        scene = dataset.scene_of(expression)
        scores = model.score(scene, expression)
        best = scores.prediction()
        for i, region in enumerate(scene.regions):
            rows.append([str(expression.id), str(region.id), _component(scores, "s_theta", i),
                         _component(scores, "s_phi", i), _component(scores, "s_omega", i),
                         _fmt(scores.total.data[i]), _fmt(scores.posterior.data[i]), str(int(i == best))])
    return rows


def context_rows(model, dataset: ReferringDataset, expressions: Iterable[ExpressionRecord]) -> List[List[str]]:
    """Up to three context regions with beta above 0.1 for each candidate referent."""
    rows = []
    for expression in expressions:
        scene = dataset.scene_of(expression)
        scores = model.score(scene, expression)
        if scores.beta is None:
            continue
        beta = scores.beta.data
        for i, region in enumerate(scene.regions):
            order = np.argsort(-beta[i], kind="stable")[:CONTEXT_TOP_K]
            for rank, j in enumerate(order, start=1):
                if beta[i, j] > CONTEXT_MIN_BETA:
                    rows.append([str(expression.id), str(region.id), str(rank), str(scene.regions[j].id),
                                 _fmt(beta[i, j])])
    return rows


def attention_rows(model, expressions: Iterable[ExpressionRecord]) -> List[List]:
    rows: List[List] = []
    for expression in expressions:
        rows.extend(model.encoder.attention_rows(expression.id, list(expression.words), model.cues(expression)))
    return rows


def write_html_summary(path: Path, title: str, tables: Dict[str, Path]) -> Path:
    """Render CSV files as HTML tables in one self-contained page."""
    parts = [f"<!DOCTYPE html><html><head><meta charset=\"utf-8\"><title>{html.escape(title)}</title>",
             "<style>body{font-family:sans-serif}table{border-collapse:collapse;margin-bottom:2em}"
             "td,th{border:1px solid #999;padding:2px 6px;text-align:right}</style></head><body>",
             f"<h1>{html.escape(title)}</h1>"]
    for caption, csv_path in tables.items():
        with open(csv_path, newline="", encoding="utf-8") as handle:
            rows = list(csv.reader(handle))
        parts.append(f"<h2>{html.escape(caption)}</h2><table>")
        if rows:
            parts.append("<tr>" + "".join(f"<th>{html.escape(c)}</th>" for c in rows[0]) + "</tr>")
            for row in rows[1:]:
                parts.append("<tr>" + "".join(f"<td>{html.escape(c)}</td>" for c in row) + "</tr>")
        parts.append("</table>")
    parts.append("</body></html>")
    path = Path(path)
    path.write_text("\n".join(parts) + "\n", encoding="utf-8")
    logger.info("Wrote %s", path)
    return path
