"""Pixel-level detection metrics and CSV reporting."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError
from .imaging import DamageMask

CSV_FIELDS = ("id", "precision", "recall", "f_score", "iou", "tp", "fp", "fn", "tn")


@dataclass(frozen=True)
class EvalReport:
    """Confusion counts and derived scores for one image (or a mean row).

    Conventions for empty masks: a prediction with no positives has
    precision 1 (it raised no false alarms); recall is 1 only when there was
    nothing to find.  F-score is 0 whenever precision + recall is 0.
    """

    image_id: str
    tp: int
    fp: int
    fn: int
    tn: int
    precision: float
    recall: float
    f_score: float
    iou: float

    @classmethod
    def from_counts(cls, image_id: str, tp: int, fp: int, fn: int, tn: int) -> "EvalReport":
        precision = tp / (tp + fp) if tp + fp > 0 else 1.0
        recall = tp / (tp + fn) if tp + fn > 0 else 1.0
        f_score = (2.0 * precision * recall / (precision + recall)
                   if precision + recall > 0 else 0.0)
        iou = tp / (tp + fp + fn) if tp + fp + fn > 0 else 1.0
        return cls(image_id, tp, fp, fn, tn, precision, recall, f_score, iou)


def evaluate(pred, gt, image_id: str = "") -> EvalReport:
    """Exact confusion counting of a predicted mask against ground truth."""
    pred = pred.damaged if isinstance(pred, DamageMask) else np.asarray(pred, dtype=bool)
    gt = gt.damaged if isinstance(gt, DamageMask) else np.asarray(gt, dtype=bool)
    if pred.shape != gt.shape:
        raise DimensionMismatchError(f"prediction {pred.shape} vs ground truth {gt.shape}")
    tp = int(np.count_nonzero(pred & gt))
    fp = int(np.count_nonzero(pred & ~gt))
    fn = int(np.count_nonzero(~pred & gt))
    tn = int(np.count_nonzero(~pred & ~gt))
    return EvalReport.from_counts(image_id, tp, fp, fn, tn)


def mean_report(reports: list[EvalReport]) -> EvalReport:
    """Mean of the per-image scores; counts are summed."""
    if not reports:
        raise ValueError("no reports to average")
    n = len(reports)
    return EvalReport(
        image_id="mean",
        tp=sum(r.tp for r in reports),
        fp=sum(r.fp for r in reports),
        fn=sum(r.fn for r in reports),
        tn=sum(r.tn for r in reports),
        precision=sum(r.precision for r in reports) / n,
        recall=sum(r.recall for r in reports) / n,
        f_score=sum(r.f_score for r in reports) / n,
        iou=sum(r.iou for r in reports) / n,
    )


def write_metrics_csv(reports: list[EvalReport], path) -> None:
    """Write per-image rows plus a final mean row, scores with 6 decimals."""
    rows = list(reports)
    if rows:
        rows.append(mean_report(rows))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_FIELDS)
        for r in rows:
            writer.writerow([
                r.image_id,
                f"{r.precision:.6f}", f"{r.recall:.6f}",
                f"{r.f_score:.6f}", f"{r.iou:.6f}",
                r.tp, r.fp, r.fn, r.tn,
            ])


def read_metrics_csv(path) -> list[EvalReport]:
    """Read a CSV written by write_metrics_csv (mean row included)."""
    out = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(EvalReport(
                image_id=row["id"],
                tp=int(row["tp"]), fp=int(row["fp"]),
                fn=int(row["fn"]), tn=int(row["tn"]),
                precision=float(row["precision"]), recall=float(row["recall"]),
                f_score=float(row["f_score"]), iou=float(row["iou"]),
            ))
    return out
