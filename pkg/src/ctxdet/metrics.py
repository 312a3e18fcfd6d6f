"""Detection quality metrics: greedy IoU matching, AUC, AP/mAP, and F1."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import DataError
from .features import ClassVocabulary, Detection, GroundTruth
from .geometry import iou

__all__ = [
    "MatchResult",
    "match_detections",
    "correctness_labels",
    "auc",
    "average_precision",
    "mean_average_precision",
    "precision_recall_f1",
    "compute_metrics",
    "save_metrics_json",
    "load_metrics_json",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MatchResult:
    """Outcome of matching one image's detections against its ground truth.

    ``det_correct`` is aligned with the input detection order.
    """

    det_correct: tuple[bool, ...]
    gt_matched: tuple[bool, ...]
    tp: int
    fp: int
    fn: int


def match_detections(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruth],
    iou_threshold: float = 0.5,
) -> MatchResult:
    """Greedily match detections to ground truth within one image.

    Detections are visited in descending confidence order (ties broken by
    input position); each claims the highest-IoU unmatched same-class ground
    truth at IoU >= ``iou_threshold``, if any. TP/FP/FN counts are invariant
    to the input ordering of equal-confidence detections.
    """
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].confidence, i))
    correct = [False] * len(dets)
    matched = [False] * len(gts)
    for i in order:
        det = dets[i]
        best_j = -1
        best_iou = 0.0
        for j, gt in enumerate(gts):
            if matched[j] or gt.class_id != det.class_id:
                continue
            value = iou(det.box, gt.box)
            if value >= iou_threshold and value > best_iou:
                best_iou = value
                best_j = j
        if best_j >= 0:
            matched[best_j] = True
            correct[i] = True
    tp = sum(correct)
    return MatchResult(
        det_correct=tuple(correct),
        gt_matched=tuple(matched),
        tp=tp,
        fp=len(dets) - tp,
        fn=len(gts) - tp,
    )


def correctness_labels(
    dets_by_image: Mapping[int, Sequence[Detection]],
    gt_by_image: Mapping[int, Sequence[GroundTruth]],
    iou_threshold: float = 0.5,
) -> dict[int, tuple[bool, ...]]:
    """Per-image correctness flags for every detection, in input order."""
    out: dict[int, tuple[bool, ...]] = {}
    for image_id in sorted(dets_by_image):
        gts = gt_by_image.get(image_id)
        if gts is None:
            raise DataError(f"image {image_id} has detections but no annotations")
        out[image_id] = match_detections(
            dets_by_image[image_id], gts, iou_threshold
        ).det_correct
    return out


def auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Area under the ROC curve via the rank-sum statistic.

    Tied scores contribute half credit per positive-negative pair. Requires
    both classes to be present.
    """
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels, dtype=np.int64)
    if s.shape != y.shape or s.ndim != 1:
        raise DataError("scores and labels must be parallel 1d sequences")
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos + n_neg != len(y):
        raise DataError("labels must be 0 or 1")
    if n_pos == 0 or n_neg == 0:
        raise DataError("AUC needs both a positive and a negative example")
    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(len(s), dtype=float)
    sorted_s = s[order]
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and sorted_s[j + 1] == sorted_s[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # average rank, 1-based
        i = j + 1
    rank_sum = float(ranks[y == 1].sum())
    u = rank_sum - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def average_precision(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruth],
    iou_threshold: float = 0.5,
) -> float:
    """All-point average precision for one class across images.

    Uses the precision envelope (precision at each recall level is the
    maximum precision at any recall >= that level).
    """
    if not gts:
        raise DataError("average precision needs at least one ground truth")
    if not dets:
        return 0.0
    gt_indices_by_image: dict[int, list[int]] = {}
    for j, gt in enumerate(gts):
        gt_indices_by_image.setdefault(gt.image_id, []).append(j)
    matched = [False] * len(gts)
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].confidence, i))
    tp = np.zeros(len(dets))
    for rank, i in enumerate(order):
        det = dets[i]
        best_j = -1
        best_iou = 0.0
        for j in gt_indices_by_image.get(det.image_id, ()):
            if matched[j] or gts[j].class_id != det.class_id:
                continue
            value = iou(det.box, gts[j].box)
            if value >= iou_threshold and value > best_iou:
                best_iou = value
                best_j = j
        if best_j >= 0:
            matched[best_j] = True
            tp[rank] = 1.0
    tp_cum = np.cumsum(tp)
    fp_cum = np.cumsum(1.0 - tp)
    recall = tp_cum / len(gts)
    precision = tp_cum / (tp_cum + fp_cum)
    # precision envelope, then sum area under recall steps
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    prev_recall = 0.0
    ap = 0.0
    for r, p in zip(recall, envelope):
        ap += (r - prev_recall) * p
        prev_recall = r
    return float(ap)


def mean_average_precision(
    dets_by_image: Mapping[int, Sequence[Detection]],
    gt_by_image: Mapping[int, Sequence[GroundTruth]],
    vocab: ClassVocabulary,
    iou_threshold: float = 0.5,
) -> tuple[float, dict[str, float]]:
    """Mean AP over classes with at least one ground truth.

    Classes without ground truth are excluded from the mean and logged.
    """
    per_class: dict[str, float] = {}
    for c, name in enumerate(vocab.names):
        class_gts = [
            gt for gts in gt_by_image.values() for gt in gts if gt.class_id == c
        ]
        if not class_gts:
            logger.info("mAP: class %r has no ground truth, excluded", name)
            continue
        class_dets = [
            det for dets in dets_by_image.values() for det in dets if det.class_id == c
        ]
        per_class[name] = average_precision(class_dets, class_gts, iou_threshold)
    if not per_class:
        raise DataError("mAP needs at least one class with ground truth")
    return float(np.mean(list(per_class.values()))), per_class


def precision_recall_f1(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    """Micro precision, recall, and F1 with 0/0 -> 0 conventions."""
    if min(tp, fp, fn) < 0:
        raise DataError("counts must be non-negative")
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = (
        2.0 * precision * recall / (precision + recall)
        if precision + recall > 0
        else 0.0
    )
    return precision, recall, f1


def compute_metrics(
    dets_by_image: Mapping[int, Sequence[Detection]],
    gt_by_image: Mapping[int, Sequence[GroundTruth]],
    vocab: ClassVocabulary,
    iou_threshold: float = 0.5,
    threshold: float | None = None,
) -> dict:
    """Full metrics report: AUC over correctness, mAP, micro P/R/F1."""
    scores: list[float] = []
    labels: list[int] = []
    tp = fp = fn = 0
    for image_id in sorted(set(dets_by_image) | set(gt_by_image)):
        dets = dets_by_image.get(image_id, [])
        gts = gt_by_image.get(image_id)
        if gts is None:
            raise DataError(f"image {image_id} has detections but no annotations")
        result = match_detections(dets, gts, iou_threshold)
        tp += result.tp
        fp += result.fp
        fn += result.fn
        scores.extend(d.confidence for d in dets)
        labels.extend(int(c) for c in result.det_correct)
    map50, per_class = mean_average_precision(
        dets_by_image, gt_by_image, vocab, iou_threshold
    )
    precision, recall, f1 = precision_recall_f1(tp, fp, fn)
    return {
        "threshold": threshold,
        "auc": auc(scores, labels),
        "map50": map50,
        "f1": f1,
        "precision": precision,
        "recall": recall,
        "per_class_ap": per_class,
    }


def save_metrics_json(report: dict, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=False)
        fh.write("\n")


def load_metrics_json(path: str) -> dict:
    with open(path) as fh:
        try:
            report = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: not valid JSON: {exc}") from None
    if not isinstance(report, dict) or "auc" not in report:
        raise DataError(f"{path}: not a metrics report")
    return report
