"""Overlap metrics (IoU, DICE) and the comparison table renderer."""

import csv
from dataclasses import dataclass, field

import numpy as np

METHOD_TITLES = {
    "cca": "Connected Component Analysis",
    "watershed": "Watershed Algorithm",
    "unet": "U-Net Model",
}


@dataclass
class PairScore:
    """Per-image overlap scores for one prediction/truth pair."""
    entry_id: str
    iou: float
    dice: float
    tp: int
    fp: int
    fn: int
    tn: int


@dataclass
class MethodReport:
    """Macro-averaged scores for one method over a set of images."""
    method: str
    scores: list = field(default_factory=list)
    mean_iou_pct: float = 0.0
    mean_dice_pct: float = 0.0

    @property
    def title(self) -> str:
        return METHOD_TITLES.get(self.method, self.method)


def confusion(pred: np.ndarray, truth: np.ndarray):
    """Return (tp, fp, fn, tn) pixel counts of two boolean masks."""
    if pred.shape != truth.shape:
        raise ValueError(f"mask shape mismatch: {pred.shape} vs {truth.shape}")
    p = pred.astype(bool)
    t = truth.astype(bool)
    tp = int(np.count_nonzero(p & t))
    fp = int(np.count_nonzero(p & ~t))
    fn = int(np.count_nonzero(~p & t))
    tn = p.size - tp - fp - fn
    return tp, fp, fn, tn


def dice(pred: np.ndarray, truth: np.ndarray) -> float:
    """DICE coefficient 2*TP / (2*TP + FP + FN).

    Two empty masks score 1.0; exactly one empty mask scores 0.0.
    """
    tp, fp, fn, _ = confusion(pred, truth)
    denom = 2 * tp + fp + fn
    if denom == 0:
        return 1.0
    return 2.0 * tp / denom


def iou(pred: np.ndarray, truth: np.ndarray) -> float:
    """Intersection over union TP / (TP + FP + FN), 1.0 when both empty."""
    tp, fp, fn, _ = confusion(pred, truth)
    denom = tp + fp + fn
    if denom == 0:
        return 1.0
    return tp / denom


def score_pair(entry_id: str, pred: np.ndarray, truth: np.ndarray) -> PairScore:
    tp, fp, fn, tn = confusion(pred, truth)
    inter_union = tp + fp + fn
    dice_denom = 2 * tp + fp + fn
    return PairScore(
        entry_id=entry_id,
        iou=1.0 if inter_union == 0 else tp / inter_union,
        dice=1.0 if dice_denom == 0 else 2.0 * tp / dice_denom,
        tp=tp, fp=fp, fn=fn, tn=tn,
    )


def aggregate(method: str, scores) -> MethodReport:
    """Macro-average per-image scores into percentages."""
    scores = list(scores)
    if not scores:
        raise ValueError(f"aggregate({method!r}): no scores to average")
    mean_iou = sum(s.iou for s in scores) / len(scores)
    mean_dice = sum(s.dice for s in scores) / len(scores)
    return MethodReport(method=method, scores=scores,
                        mean_iou_pct=100.0 * mean_iou,
                        mean_dice_pct=100.0 * mean_dice)


def render_markdown(reports) -> str:
    """Render the comparison table, one row per method, one decimal place."""
    lines = [
        "| Name of Approach | IoU Metric | DICE Score |",
        "| --- | --- | --- |",
    ]
    for rep in reports:
        lines.append(f"| {rep.title} | {rep.mean_iou_pct:.1f} | "
                     f"{rep.mean_dice_pct:.1f} |")
    return "\n".join(lines) + "\n"


def write_scores_csv(path, reports):
    """Per-image rows: method, entry id, iou, dice and confusion counts."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "entry_id", "iou", "dice",
                         "tp", "fp", "fn", "tn"])
        for rep in reports:
            for s in rep.scores:
                writer.writerow([rep.method, s.entry_id,
                                 f"{s.iou:.6f}", f"{s.dice:.6f}",
                                 s.tp, s.fp, s.fn, s.tn])


def write_summary_csv(path, reports):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "mean_iou_pct", "mean_dice_pct", "n_images"])
        for rep in reports:
            writer.writerow([rep.method,
                             f"{rep.mean_iou_pct:.1f}",
                             f"{rep.mean_dice_pct:.1f}",
                             len(rep.scores)])
