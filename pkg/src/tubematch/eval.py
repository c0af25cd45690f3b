"""Frame-level and video-level mean average precision."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, Hashable, Mapping, Optional, Sequence, Tuple

import numpy as np

from .core import ActionTube, FrameDetection, box_iou, box_iou_matrix
from .tubes import tube_3d_iou

__all__ = [
    "THRESHOLDS",
    "MapSection",
    "EvalReport",
    "ap_from_ranking",
    "ap_from_overlaps",
    "average_precision",
    "frame_map",
    "video_map",
    "frame_ground_truth",
    "threshold_key",
]

THRESHOLDS: Tuple[float, ...] = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))


def threshold_key(thr: float) -> str:
    return f"{thr:.2f}"


def ap_from_ranking(tp, n_gt: int, eleven_point: bool = False) -> float:
    """AP from true-positive flags listed in descending score order."""
    tp = np.asarray(tp, dtype=np.float64)
    if n_gt <= 0 or tp.size == 0:
        return 0.0
    ctp = np.cumsum(tp)
    cfp = np.cumsum(1.0 - tp)
    rec = ctp / n_gt
    prec = ctp / (ctp + cfp)
    if eleven_point:
        ap = 0.0
        for r in np.linspace(0.0, 1.0, 11):
            above = prec[rec >= r]
            ap += (above.max() if above.size else 0.0) / 11.0
        return float(ap)
    mrec = np.concatenate(([0.0], rec, [1.0]))
    mpre = np.concatenate(([0.0], prec, [0.0]))
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    steps = np.flatnonzero(mrec[1:] != mrec[:-1])
    return float(np.sum((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]))


def _greedy_tp(order, overlaps, threshold):
    n_pred, n_gt = overlaps.shape
    tp = np.zeros(n_pred)
    if n_gt == 0 or n_pred == 0:
        return tp
    ranked = overlaps[order]
    # rows that never clear the threshold are false positives whatever is matched
    candidates = np.flatnonzero(ranked.max(axis=1) > threshold)
    taken = np.zeros(n_gt, dtype=bool)
    for pos in candidates:
        row = np.where(taken, -1.0, ranked[pos])
        g = int(np.argmax(row))
        if row[g] > threshold:
            tp[pos] = 1.0
            taken[g] = True
    return tp


def _ranking(scores):
    scores = np.asarray(scores, dtype=np.float64)
    if not np.all(np.isfinite(scores)):
        raise ValueError("prediction scores must be finite")
    return np.argsort(-scores, kind="stable")


def ap_from_overlaps(scores, overlaps, threshold: float, eleven_point: bool = False) -> float:
    """AP for predictions with ``scores`` and a P x G ``overlaps`` matrix."""
    overlaps = np.asarray(overlaps, dtype=np.float64)
    if overlaps.ndim != 2:
        overlaps = overlaps.reshape(len(scores), -1)
    order = _ranking(scores)
    tp = _greedy_tp(order, overlaps, threshold)
    return ap_from_ranking(tp, overlaps.shape[1], eleven_point)


def average_precision(preds: Sequence[Tuple[float, object]], gts: Sequence[object], threshold: float,
                      overlap: Callable[[object, object], float] = box_iou,
                      eleven_point: bool = False) -> float:
    """Average precision of scored predictions against ground-truth items.

    ``preds`` is a sequence of ``(score, item)`` pairs. Predictions are
    visited in descending score order (input order on ties) and matched to
    the unmatched ground truth they overlap most; the match counts as a
    true positive when that overlap is strictly above ``threshold``.
    """
    scores = [float(s) for s, _ in preds]
    mat = np.zeros((len(preds), len(gts)))
    for i, (_, item) in enumerate(preds):
        for j, gt in enumerate(gts):
            mat[i, j] = overlap(item, gt)
    return ap_from_overlaps(scores, mat, threshold, eleven_point)


@dataclass
class MapSection:
    """mAP per threshold plus per-class AP for one metric."""

    by_threshold: Dict[float, float]
    per_class: Dict[float, Dict[int, float]] = field(default_factory=dict)

    @property
    def avg_50_95(self) -> Optional[float]:
        if not all(t in self.by_threshold for t in THRESHOLDS):
            return None
        return float(sum(self.by_threshold[t] for t in THRESHOLDS) / len(THRESHOLDS))

    def __getitem__(self, thr: float) -> float:
        return self.by_threshold[thr]

    def to_dict(self) -> dict:
        out = {threshold_key(t): v for t, v in sorted(self.by_threshold.items())}
        out["avg_50_95"] = self.avg_50_95
        return out

    def per_class_dict(self) -> dict:
        return {threshold_key(t): {str(c): ap for c, ap in sorted(row.items())}
                for t, row in sorted(self.per_class.items())}


@dataclass
class EvalReport:
    frame_map: Optional[MapSection] = None
    video_map: Optional[MapSection] = None

    @property
    def per_class_ap(self) -> Dict[Tuple[str, float, int], float]:
        out = {}
        for metric, section in (("frame", self.frame_map), ("video", self.video_map)):
            if section is None:
                continue
            for thr, row in section.per_class.items():
                for c, ap in row.items():
                    out[(metric, thr, c)] = ap
        return out

    def to_dict(self) -> dict:
        out = {"schema_version": 1}
        for metric, section in (("frame_map", self.frame_map), ("video_map", self.video_map)):
            out[metric] = None if section is None else section.to_dict()
        out["per_class_ap"] = {
            metric: section.per_class_dict()
            for metric, section in (("frame", self.frame_map), ("video", self.video_map))
            if section is not None
        }
        return out


def frame_ground_truth(gt_tubes: Mapping[Hashable, Sequence[ActionTube]]):
    """Flatten ground-truth tubes into ``(video, frame, class, box)`` rows."""
    rows = []
    for vid in gt_tubes:
        for tube in gt_tubes[vid]:
            for f, box in tube.entries:
                rows.append((vid, f, tube.class_id, box))
    return rows


def _check_classes(num_classes, gt_tubes):
    for vid in gt_tubes:
        for tube in gt_tubes[vid]:
            if tube.class_id >= num_classes:
                raise ValueError(f"ground-truth class {tube.class_id} in video {vid!r} >= num_classes {num_classes}")


def _summarise(per_class_ap, present, thresholds):
    by_thr, per_class = {}, {}
    for thr in thresholds:
        row = {c: per_class_ap[(thr, c)] for c in present}
        per_class[thr] = row
        by_thr[thr] = float(np.mean(list(row.values()))) if row else 0.0
    return MapSection(by_thr, per_class)


def frame_map(dets: Mapping[Hashable, Sequence[FrameDetection]],
              gt_tubes: Mapping[Hashable, Sequence[ActionTube]], num_classes: int,
              thresholds: Sequence[float] = THRESHOLDS, eleven_point: bool = False) -> MapSection:
    """Frame-mAP pooling detections of all videos.

    Every detection is a candidate for every class, scored by its score for
    that class. Ground truth comes from the per-frame boxes of ``gt_tubes``.
    """
    _check_classes(num_classes, gt_tubes)
    keys: Dict[Tuple[Hashable, int], int] = {}
    p_key, p_box, p_scores = [], [], []
    for vid in dets:
        for det in dets[vid]:
            if det.num_classes != num_classes:
                raise ValueError(f"detection has {det.num_classes} class scores, expected {num_classes}")
            p_key.append(keys.setdefault((vid, det.frame_index), len(keys)))
            p_box.append(det.box.as_list())
            p_scores.append(det.class_scores)
    p_key = np.asarray(p_key, dtype=np.int64)
    p_box = np.asarray(p_box, dtype=np.float64).reshape(-1, 4)
    p_scores = np.asarray(p_scores, dtype=np.float64).reshape(-1, num_classes)

    gt_rows = frame_ground_truth(gt_tubes)
    present = sorted({c for _, _, c, _ in gt_rows})
    per_class_ap = {}
    for c in present:
        rows = [r for r in gt_rows if r[2] == c]
        g_key = np.array([keys.get((v, f), -1) for v, f, _, _ in rows], dtype=np.int64)
        g_box = np.array([b.as_list() for *_, b in rows], dtype=np.float64)
        overlaps = box_iou_matrix(p_box, g_box) * (p_key[:, None] == g_key[None, :])
        order = _ranking(p_scores[:, c])
        for thr in thresholds:
            tp = _greedy_tp(order, overlaps, thr)
            per_class_ap[(thr, c)] = ap_from_ranking(tp, len(rows), eleven_point)
    return _summarise(per_class_ap, present, thresholds)


def video_map(tubes: Mapping[Hashable, Sequence[ActionTube]],
              gt_tubes: Mapping[Hashable, Sequence[ActionTube]], num_classes: int,
              thresholds: Sequence[float] = THRESHOLDS, eleven_point: bool = False) -> MapSection:
    """Video-mAP: tubes ranked by score, correct when 3D IoU clears the threshold."""
    _check_classes(num_classes, gt_tubes)
    for vid in tubes:
        for tube in tubes[vid]:
            if tube.class_id >= num_classes:
                raise ValueError(f"predicted class {tube.class_id} in video {vid!r} >= num_classes {num_classes}")
    present = sorted({t.class_id for vid in gt_tubes for t in gt_tubes[vid]})
    per_class_ap = {}
    for c in present:
        preds = [(vid, t) for vid in tubes for t in tubes[vid] if t.class_id == c]
        gts = [(vid, t) for vid in gt_tubes for t in gt_tubes[vid] if t.class_id == c]
        overlaps = np.zeros((len(preds), len(gts)))
        for i, (pv, pt) in enumerate(preds):
            for j, (gv, gt) in enumerate(gts):
                if pv == gv:
                    overlaps[i, j] = tube_3d_iou(pt, gt)
        order = _ranking([t.score for _, t in preds])
        for thr in thresholds:
            tp = _greedy_tp(order, overlaps, thr)
            per_class_ap[(thr, c)] = ap_from_ranking(tp, len(gts), eleven_point)
    return _summarise(per_class_ap, present, thresholds)
