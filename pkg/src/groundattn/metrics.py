"""Grounding metrics: CNR, IoU (foreground and two-class), AUC-ROC, Top-1,
plus per-category aggregation with a weighted-average row."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .attnstore import GroundTruthRegion
from .extraction import ActivationMap
from .masking import BinaryMask


class MetricError(ValueError):
    pass


def _split(map_grid: np.ndarray, gt: GroundTruthRegion) -> tuple[np.ndarray, np.ndarray]:
    interior = gt.mask(map_grid.shape[0])
    if not interior.any():
        raise MetricError("empty ground-truth interior")
    if interior.all():
        raise MetricError("ground-truth boxes cover the whole grid (empty exterior)")
    return map_grid[interior], map_grid[~interior]


def cnr(amap: ActivationMap, gt: GroundTruthRegion) -> float:
    """|mean_in - mean_out| / sqrt(var_in + var_out), population variances.

    Degenerate (zero total variance): +inf when the means differ, 0 when equal.
    """
    inside, outside = _split(amap.grid.astype(np.float64), gt)
    num = abs(float(inside.mean()) - float(outside.mean()))
    den2 = float(inside.var()) + float(outside.var())
    if den2 < 1e-12:
        return math.inf if num > 0 else 0.0
    return num / math.sqrt(den2)


def iou(mask: BinaryMask, gt: GroundTruthRegion, reading: str = "two-class") -> float:
    """Jaccard overlap of mask vs ground-truth boxes.

    "fg": |A&B| / |A|B|; "two-class": mean of the foreground Jaccard and
    the Jaccard of the two complements.
    """
    a = mask.boolean
    b = gt.mask(a.shape[0])
    if not a.any() and not b.any():
        raise MetricError("both mask and ground truth empty: IoU undefined")

    def jac(x: np.ndarray, y: np.ndarray) -> float:
        union = np.logical_or(x, y).sum()
        if union == 0:
            return 1.0  # both empty: identical sets
        return float(np.logical_and(x, y).sum()) / float(union)

    if reading == "fg":
        return jac(a, b)
    if reading == "two-class":
        return 0.5 * (jac(a, b) + jac(~a, ~b))
    raise MetricError(f"unknown IoU reading {reading!r}")


def auc_roc(amap: ActivationMap, gt: GroundTruthRegion) -> float:
    """P(random interior pixel outscores random exterior pixel), ties at 1/2."""
    inside, outside = _split(amap.grid.astype(np.float64), gt)
    scores = np.concatenate([inside, outside])
    ranks = rankdata(scores)  # average ranks handle ties as 1/2
    n_in = inside.size
    r_in = ranks[:n_in].sum()
    return float((r_in - n_in * (n_in + 1) / 2.0) / (n_in * outside.size))


def top1(amap: ActivationMap, gt: GroundTruthRegion) -> tuple[bool, bool]:
    """(hit, tie): whether the first row-major argmax falls in a gt box."""
    g = amap.grid
    flat = int(np.argmax(g))
    tie = bool((g == g.flat[flat]).sum() > 1)
    r, c = divmod(flat, g.shape[1])
    return bool(gt.mask(g.shape[0])[r, c]), tie


@dataclass
class MetricsRecord:
    sample_id: str
    category: str
    cnr: float
    iou_fg: float
    miou_2class: float
    auc_roc: float
    top1_hit: bool
    run: str = "run0"
    flags: list[str] = field(default_factory=list)


def evaluate_sample(
    sample_id: str,
    amap: ActivationMap,
    mask: BinaryMask,
    gt: GroundTruthRegion,
    run: str = "run0",
) -> MetricsRecord:
    hit, tie = top1(amap, gt)
    flags = []
    if tie:
        flags.append("top1_tie")
    if mask.degenerate:
        flags.append("degenerate_mask")
    return MetricsRecord(
        sample_id=sample_id,
        category=gt.category,
        cnr=cnr(amap, gt),
        iou_fg=iou(mask, gt, "fg"),
        miou_2class=iou(mask, gt, "two-class"),
        auc_roc=auc_roc(amap, gt),
        top1_hit=hit,
        run=run,
        flags=flags,
    )


METRIC_FIELDS = ("cnr", "iou_fg", "miou_2class", "auc_roc", "top1_rate")


@dataclass
class CategoryRow:
    category: str
    n: int  # samples per run (mean across runs if uneven)
    mean: dict  # metric -> mean over runs of per-run means
    std: dict  # metric -> sample std (ddof=1) across runs, 0 for one run


@dataclass
class GroundingReport:
    rows: list[CategoryRow]
    weighted: CategoryRow
    runs: list[str]


def _record_values(r: MetricsRecord) -> dict:
    return {
        "cnr": r.cnr,
        "iou_fg": r.iou_fg,
        "miou_2class": r.miou_2class,
        "auc_roc": r.auc_roc,
        "top1_rate": 1.0 if r.top1_hit else 0.0,
    }


def aggregate(records: list[MetricsRecord]) -> GroundingReport:
    """Per-category mean over samples, then mean +/- sample std across runs,
    plus a weighted-average row (weights = per-category sample counts)."""
    if not records:
        raise MetricError("no records to aggregate")
    runs = sorted({r.run for r in records})
    cats = sorted({r.category for r in records})
    rows = []
    for cat in cats:
        per_run = {}
        counts = []
        for run in runs:
            vals = [_record_values(r) for r in records if r.category == cat and r.run == run]
            if not vals:
                continue
            counts.append(len(vals))
            per_run[run] = {
                m: float(np.mean([v[m] for v in vals])) for m in METRIC_FIELDS
            }
        if not per_run:
            continue
        mean = {
            m: float(np.mean([pr[m] for pr in per_run.values()]))
            for m in METRIC_FIELDS
        }
        std = {
            m: (
                float(np.std([pr[m] for pr in per_run.values()], ddof=1))
                if len(per_run) > 1
                else 0.0
            )
            for m in METRIC_FIELDS
        }
        rows.append(CategoryRow(cat, int(round(np.mean(counts))), mean, std))

    total = sum(row.n for row in rows)
    weighted = CategoryRow(
        "weighted_avg",
        total,
        {
            m: sum(row.n * row.mean[m] for row in rows) / total
            for m in METRIC_FIELDS
        },
        {
            m: sum(row.n * row.std[m] for row in rows) / total
            for m in METRIC_FIELDS
        },
    )
    return GroundingReport(rows, weighted, runs)


def write_report_csv(report: GroundingReport, path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(
            ["category", "n", "cnr_mean", "cnr_std", "iou_fg_mean",
             "miou2_mean", "auc_mean", "top1_rate"]
        )
        for row in list(report.rows) + [report.weighted]:
            w.writerow(
                [
                    row.category,
                    row.n,
                    f"{row.mean['cnr']:.6f}",
                    f"{row.std['cnr']:.6f}",
                    f"{row.mean['iou_fg']:.6f}",
                    f"{row.mean['miou_2class']:.6f}",
                    f"{row.mean['auc_roc']:.6f}",
                    f"{row.mean['top1_rate']:.6f}",
                ]
            )


def write_report_json(report: GroundingReport, records: list[MetricsRecord],
                      path: str | Path) -> None:
    doc = {
        "runs": report.runs,
        "categories": [asdict(row) for row in report.rows],
        "weighted_avg": asdict(report.weighted),
        "records": [asdict(r) for r in records],
    }
    Path(path).write_text(json.dumps(doc, indent=1))
