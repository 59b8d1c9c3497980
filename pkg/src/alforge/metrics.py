"""Detection evaluation: IoU, greedy matching, AP (all-point), mAP at IoU 0.5."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .active_learning import Detection
from .dataset import ImageRecord, NormBox
from .errors import ConfigInvalid


@dataclass(frozen=True)
class MatchConfig:
    iou_threshold: float = 0.5

    def __post_init__(self) -> None:
        if not 0 < self.iou_threshold <= 1:
            raise ConfigInvalid("iou_threshold must lie in (0, 1]")


def iou(a: NormBox, b: NormBox) -> float:
    ax0, ax1 = a.cx - a.w / 2, a.cx + a.w / 2
    ay0, ay1 = a.cy - a.h / 2, a.cy + a.h / 2
    bx0, bx1 = b.cx - b.w / 2, b.cx + b.w / 2
    by0, by1 = b.cy - b.h / 2, b.cy + b.h / 2
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = a.w * a.h + b.w * b.h - inter
    return inter / union


@dataclass(frozen=True)
class ClassMatches:
    """Per-class match outcome: scores in descending order with TP flags."""

    scores: tuple[float, ...]
    tp: tuple[bool, ...]
    n_gt: int


def _gt_by_image(gt: Sequence[ImageRecord] | Mapping[str, Sequence[NormBox]]) -> dict[str, list[NormBox]]:
    if isinstance(gt, Mapping):
        return {k: list(v) for k, v in gt.items()}
    return {r.image_id: list(r.labels) for r in gt}


def match_detections(
    predictions: Mapping[str, Sequence[Detection]],
    gt: Sequence[ImageRecord] | Mapping[str, Sequence[NormBox]],
    cfg: MatchConfig = MatchConfig(),
) -> dict[int, ClassMatches]:
    """Greedy per-class, per-image matching; one prediction per GT box."""
    gt_map = _gt_by_image(gt)
    class_ids = {b.class_id for boxes in gt_map.values() for b in boxes}
    class_ids |= {d.box.class_id for dets in predictions.values() for d in dets}

    out: dict[int, ClassMatches] = {}
    for class_id in sorted(class_ids):
        scored: list[tuple[float, bool]] = []
        n_gt = 0
        image_ids = sorted(set(gt_map) | set(predictions))
        for image_id in image_ids:
            gt_boxes = [b for b in gt_map.get(image_id, ()) if b.class_id == class_id]
            n_gt += len(gt_boxes)
            dets = [d for d in predictions.get(image_id, ()) if d.box.class_id == class_id]
            # Stable sort keeps insertion order among equal scores.
            dets = sorted(dets, key=lambda d: -d.score)
            matched = [False] * len(gt_boxes)
            for det in dets:
                best, best_iou = -1, cfg.iou_threshold
                for j, gt_box in enumerate(gt_boxes):
                    if matched[j]:
                        continue
                    v = iou(det.box, gt_box)
                    if v >= best_iou:
                        best, best_iou = j, v
                if best >= 0:
                    matched[best] = True
                    scored.append((det.score, True))
                else:
                    scored.append((det.score, False))
        scored.sort(key=lambda t: -t[0])
        out[class_id] = ClassMatches(
            tuple(s for s, _ in scored), tuple(t for _, t in scored), n_gt)
    return out


def precision_recall_curve(tp: Sequence[bool], n_gt: int) -> tuple[np.ndarray, np.ndarray]:
    """Recall/precision at each prefix of the score-ordered flag sequence."""
    flags = np.asarray(tp, dtype=bool)
    tp_cum = np.cumsum(flags)
    fp_cum = np.cumsum(~flags)
    precision = tp_cum / np.maximum(tp_cum + fp_cum, 1)
    recall = tp_cum / n_gt if n_gt > 0 else np.zeros_like(precision, dtype=float)
    return recall, precision


def average_precision(tp: Sequence[bool], n_gt: int) -> float | None:
    """All-point interpolated AP (monotone precision envelope over recall).

    Returns None (undefined) when there is neither GT nor any prediction.
    """
    if n_gt == 0:
        return 0.0 if len(tp) else None
    if not len(tp):
        return 0.0
    recall, precision = precision_recall_curve(tp, n_gt)
    mrec = np.concatenate(([0.0], recall, [recall[-1]]))
    mpre = np.concatenate(([1.0], precision, [0.0]))
    for i in range(mpre.size - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    idx = np.where(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[idx + 1] - mrec[idx]) * mpre[idx + 1]))


@dataclass(frozen=True)
class EvalSummary:
    per_class_ap: Mapping[int, float | None]
    map50: float | None
    precision: float
    recall: float
    operating_threshold: float
    counts: Mapping[int, tuple[int, int, int]]  # class -> (TP, FP, FN) at threshold
    curves: Mapping[int, tuple[tuple[float, ...], tuple[float, ...]]]  # class -> (recall, precision)


def _operating_point(matches: dict[int, ClassMatches]) -> tuple[float, float, float]:
    """Max-F1 threshold over the pooled (all-class) PR curve."""
    pooled = sorted(
        ((s, t) for m in matches.values() for s, t in zip(m.scores, m.tp)),
        key=lambda t: -t[0],
    )
    total_gt = sum(m.n_gt for m in matches.values())
    if not pooled or total_gt == 0:
        return 0.0, 0.0, 0.0
    flags = np.array([t for _, t in pooled], dtype=bool)
    scores = np.array([s for s, _ in pooled])
    tp_cum = np.cumsum(flags)
    fp_cum = np.cumsum(~flags)
    precision = tp_cum / np.maximum(tp_cum + fp_cum, 1)
    recall = tp_cum / total_gt
    f1 = 2 * precision * recall / np.maximum(precision + recall, 1e-12)
    best = int(np.argmax(f1))
    return float(precision[best]), float(recall[best]), float(scores[best])


def evaluate(
    predictions: Mapping[str, Sequence[Detection]],
    gt: Sequence[ImageRecord] | Mapping[str, Sequence[NormBox]],
    cfg: MatchConfig = MatchConfig(),
) -> EvalSummary:
    matches = match_detections(predictions, gt, cfg)
    per_class_ap: dict[int, float | None] = {}
    curves: dict[int, tuple[tuple[float, ...], tuple[float, ...]]] = {}
    for class_id, m in matches.items():
        per_class_ap[class_id] = average_precision(m.tp, m.n_gt)
        recall, precision = precision_recall_curve(m.tp, m.n_gt)
        curves[class_id] = (tuple(recall.tolist()), tuple(precision.tolist()))
    # mAP averages classes present in the ground truth.
    gt_classes = [c for c, m in matches.items() if m.n_gt > 0]
    map50 = (
        float(np.mean([per_class_ap[c] for c in gt_classes])) if gt_classes else None
    )
    p, r, threshold = _operating_point(matches)
    counts: dict[int, tuple[int, int, int]] = {}
    for class_id, m in matches.items():
        keep = [i for i, s in enumerate(m.scores) if s >= threshold]
        tp = sum(1 for i in keep if m.tp[i])
        fp = len(keep) - tp
        counts[class_id] = (tp, fp, m.n_gt - tp)
    return EvalSummary(per_class_ap, map50, p, r, threshold, counts, curves)
