"""Instance-level evaluation: matching, precision/recall, AP and PQ.

A match requires IoU strictly greater than 0.5, which guarantees that every
prediction matches at most one ground-truth instance and vice versa.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .masks import BinaryMask, intersection_area
from .model import LeafInstance

IOU_MATCH = 0.5


@dataclass
class MatchResult:
    matches: List[Tuple[int, int, float]]  # (pred index, gt index, IoU)
    unmatched_pred: List[int]
    unmatched_gt: List[int]

    @property
    def tp(self) -> int:
        return len(self.matches)

    @property
    def fp(self) -> int:
        return len(self.unmatched_pred)

    @property
    def fn(self) -> int:
        return len(self.unmatched_gt)


def match_instances(pred: Sequence[BinaryMask], gt: Sequence[BinaryMask]) -> MatchResult:
    """All-pairs matching at IoU > 0.5 (unique by construction)."""
    matches = []
    matched_p, matched_g = set(), set()
    for pi, pm in enumerate(pred):
        for gi, gm in enumerate(gt):
            inter = intersection_area(pm, gm)
            if inter == 0:
                continue
            union = pm.area + gm.area - inter
            iou = inter / union
            if iou > IOU_MATCH:
                matches.append((pi, gi, iou))
                matched_p.add(pi)
                matched_g.add(gi)
    return MatchResult(
        matches=matches,
        unmatched_pred=[i for i in range(len(pred)) if i not in matched_p],
        unmatched_gt=[i for i in range(len(gt)) if i not in matched_g],
    )


def precision_recall_50(match: MatchResult) -> Tuple[float, float]:
    tp, fp, fn = match.tp, match.fp, match.fn
    prec = tp / (tp + fp) if tp + fp > 0 else 0.0
    rec = tp / (tp + fn) if tp + fn > 0 else 0.0
    return prec, rec


@dataclass
class ScoredDetection:
    """One prediction pooled across images for the AP sweep."""

    image_id: int
    score: float
    area: int
    is_tp: bool


def average_precision_50(detections: Sequence[ScoredDetection], total_gt: int) -> Optional[float]:
    """All-point interpolated area under the precision/recall curve.

    Returns None (vacuous) when there is no ground truth and no detections.
    """
    if total_gt == 0 and not detections:
        return None
    if total_gt == 0:
        return 0.0
    ordered = sorted(detections, key=lambda d: (-d.score, d.image_id, -d.area))
    tps = np.cumsum([d.is_tp for d in ordered]) if ordered else np.empty(0)
    if len(ordered) == 0:
        return 0.0
    ranks = np.arange(1, len(ordered) + 1)
    precision = tps / ranks
    recall = tps / total_gt
    # monotone non-increasing precision envelope, swept right to left
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    ap = 0.0
    prev_r = 0.0
    for p, r in zip(envelope, recall):
        if r > prev_r:
            ap += (r - prev_r) * p
            prev_r = r
    return float(ap)


def panoptic_quality(match: MatchResult) -> Optional[float]:
    """Sum of matched IoUs over (TP + FP/2 + FN/2); None when vacuous."""
    tp, fp, fn = match.tp, match.fp, match.fn
    denom = tp + 0.5 * fp + 0.5 * fn
    if denom == 0:
        return None
    return sum(iou for _, _, iou in match.matches) / denom


@dataclass
class LevelReport:
    prec50: float
    rec50: float
    ap50: float
    pq: float
    tp: int
    fp: int
    fn: int
    mean_matched_iou: float
    vacuous: bool = False
    no_gt: bool = False

    def to_dict(self) -> dict:
        return {
            "prec50": self.prec50, "rec50": self.rec50, "ap50": self.ap50, "pq": self.pq,
            "tp": self.tp, "fp": self.fp, "fn": self.fn,
            "mean_matched_iou": self.mean_matched_iou,
            "vacuous": self.vacuous, "no_gt": self.no_gt,
        }


@dataclass
class MetricsReport:
    plant: LevelReport
    leaf: LevelReport
    per_image: List[dict] = field(default_factory=list)

    # convenience aliases matching common reporting practice
    @property
    def prec50(self) -> float:
        return self.plant.prec50

    @property
    def rec50(self) -> float:
        return self.plant.rec50

    @property
    def ap50(self) -> float:
        return self.plant.ap50

    @property
    def pq_plant(self) -> float:
        return self.plant.pq

    @property
    def pq_leaf(self) -> float:
        return self.leaf.pq

    def to_dict(self) -> dict:
        return {
            "prec50": self.prec50, "rec50": self.rec50, "ap50": self.ap50,
            "pq_plant": self.pq_plant, "pq_leaf": self.pq_leaf,
            "plant": self.plant.to_dict(), "leaf": self.leaf.to_dict(),
            "per_image": self.per_image,
        }


def _score_of(instances: Sequence[LeafInstance]) -> List[float]:
    """Ordering scores; score-less (all 1.0) sets fall back to area rank."""
    return [inst.score for inst in instances]


def evaluate_level(preds_by_image: Dict[int, List[LeafInstance]],
                   gts_by_image: Dict[int, List[BinaryMask]]) -> LevelReport:
    """Aggregate one semantic level (plants or leaves) across images."""
    detections: List[ScoredDetection] = []
    tp = fp = fn = 0
    iou_sum = 0.0
    pq_num = 0.0
    image_ids = sorted(set(preds_by_image) | set(gts_by_image))
    total_gt = 0
    for img in image_ids:
        preds = preds_by_image.get(img, [])
        gts = gts_by_image.get(img, [])
        match = match_instances([p.mask for p in preds], gts)
        total_gt += len(gts)
        tp += match.tp
        fp += match.fp
        fn += match.fn
        iou_sum += sum(iou for _, _, iou in match.matches)
        pq_num += sum(iou for _, _, iou in match.matches)
        tp_idx = {pi for pi, _, _ in match.matches}
        for pi, p in enumerate(preds):
            detections.append(ScoredDetection(
                image_id=img, score=p.score, area=p.mask.area, is_tp=pi in tp_idx))
    prec = tp / (tp + fp) if tp + fp > 0 else 0.0
    rec = tp / (tp + fn) if tp + fn > 0 else 0.0
    ap = average_precision_50(detections, total_gt)
    denom = tp + 0.5 * fp + 0.5 * fn
    pq = pq_num / denom if denom > 0 else None
    vacuous = ap is None and pq is None
    return LevelReport(
        prec50=prec,
        rec50=rec,
        ap50=0.0 if ap is None else ap,
        pq=0.0 if pq is None else pq,
        tp=tp, fp=fp, fn=fn,
        mean_matched_iou=iou_sum / tp if tp else 0.0,
        vacuous=vacuous,
        no_gt=total_gt == 0,
    )


def evaluate(pred_plants: Dict[int, List[LeafInstance]],
             gt_plants: Dict[int, List[BinaryMask]],
             pred_leaves: Dict[int, List[LeafInstance]],
             gt_leaves: Dict[int, List[BinaryMask]]) -> MetricsReport:
    """Full report over paired per-image prediction/ground-truth sets."""
    plant = evaluate_level(pred_plants, gt_plants)
    leaf = evaluate_level(pred_leaves, gt_leaves)
    per_image = []
    for img in sorted(set(pred_plants) | set(gt_plants)):
        p = evaluate_level({img: pred_plants.get(img, [])}, {img: gt_plants.get(img, [])})
        l = evaluate_level({img: pred_leaves.get(img, [])}, {img: gt_leaves.get(img, [])})
        per_image.append({"image_id": img, "plant": p.to_dict(), "leaf": l.to_dict()})
    return MetricsReport(plant=plant, leaf=leaf, per_image=per_image)
