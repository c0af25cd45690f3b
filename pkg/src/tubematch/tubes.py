"""Linking per-frame detections into action tubes, and tube overlap."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Sequence

import numpy as np

from .core import ActionTube, FrameDetection, box_iou, box_iou_matrix

__all__ = ["LinkParams", "link_tubes", "link_video", "tube_3d_iou", "temporal_iou"]


@dataclass(frozen=True)
class LinkParams:
    """Linking weights.

    lambda_iou
        Weight of the box-overlap term against the class-score term.
    min_link_iou
        Consecutive boxes overlapping less than this cannot be linked.
    score_floor
        Extraction stops once the best remaining path's mean score drops below it.
    """

    lambda_iou: float = 1.0
    min_link_iou: float = 0.1
    score_floor: float = 0.05

    def __post_init__(self):
        for name in ("lambda_iou", "min_link_iou", "score_floor"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.lambda_iou < 0:
            raise ValueError(f"lambda_iou must be >= 0, got {self.lambda_iou}")
        if not 0.0 <= self.min_link_iou <= 1.0:
            raise ValueError(f"min_link_iou must lie in [0, 1], got {self.min_link_iou}")


def _edge_weights(ious, params):
    """Weighted overlap per frame pair, ``-inf`` where linking is forbidden."""
    return [np.where(edge >= params.min_link_iou, params.lambda_iou * edge, -np.inf) for edge in ious]


def _best_path(scores, alive, weights):
    """Viterbi pass over full-length paths through alive detections.

    Returns ``(objective, path)`` or ``None`` if no admissible path exists.
    """
    n_frames = len(scores)
    val = np.where(alive[0], scores[0], -np.inf)
    back = []
    for t in range(1, n_frames):
        # dead predecessors carry -inf in val, so they never win
        cand = val[:, None] + weights[t - 1]
        prev = np.argmax(cand, axis=0)
        best = cand[prev, np.arange(cand.shape[1])]
        val = np.where(alive[t] & np.isfinite(best), best + scores[t], -np.inf)
        back.append(prev)
    if not np.any(np.isfinite(val)):
        return None
    j = int(np.argmax(val))
    objective = float(val[j])
    path = [j]
    for prev in reversed(back):
        j = int(prev[j])
        path.append(j)
    path.reverse()
    return objective, path


def link_tubes(dets: Sequence[Sequence[FrameDetection]], class_id: int,
               params: LinkParams = LinkParams(), start_frame: int = 0) -> List[ActionTube]:
    """Link detections of consecutive frames into tubes for one class.

    ``dets[t]`` holds the detections of frame ``start_frame + t``. Paths
    span every frame. The best path by summed class score plus weighted
    box overlap is taken, its detections are removed, and the search
    repeats until no complete path remains or the best one's mean class
    score is below ``params.score_floor``.
    """
    if len(dets) == 0:
        raise ValueError("cannot link an empty frame list")
    if any(len(frame) == 0 for frame in dets):
        return []
    boxes, scores = [], []
    for frame in dets:
        for det in frame:
            if not 0 <= class_id < det.num_classes:
                raise ValueError(f"class {class_id} outside detection score range {det.num_classes}")
        boxes.append(np.array([d.box.as_list() for d in frame], dtype=np.float64))
        scores.append(np.array([d.class_scores[class_id] for d in frame], dtype=np.float64))
    ious = [box_iou_matrix(boxes[t], boxes[t + 1]) for t in range(len(dets) - 1)]
    return _extract(dets, scores, _edge_weights(ious, params), class_id, params, start_frame)


def _extract(dets, scores, weights, class_id, params, start_frame):
    alive = [np.ones(len(frame), dtype=bool) for frame in dets]
    tubes = []
    while True:
        found = _best_path(scores, alive, weights)
        if found is None:
            break
        _, path = found
        mean_score = float(np.mean([scores[t][j] for t, j in enumerate(path)]))
        if mean_score < params.score_floor:
            break
        entries = tuple((start_frame + t, dets[t][j].box) for t, j in enumerate(path))
        tubes.append(ActionTube(class_id, mean_score, entries))
        for t, j in enumerate(path):
            alive[t][j] = False
    return tubes


def link_video(dets: Sequence[Sequence[FrameDetection]], num_classes: int,
               params: LinkParams = LinkParams(), start_frame: int = 0) -> Dict[int, List[ActionTube]]:
    """Link every class of one video, sharing the box-overlap matrices."""
    if len(dets) == 0:
        raise ValueError("cannot link an empty frame list")
    out = {c: [] for c in range(num_classes)}
    if any(len(frame) == 0 for frame in dets):
        return out
    for frame in dets:
        for det in frame:
            if det.num_classes != num_classes:
                raise ValueError(f"detection has {det.num_classes} class scores, expected {num_classes}")
    boxes = [np.array([d.box.as_list() for d in frame], dtype=np.float64) for frame in dets]
    all_scores = [np.array([d.class_scores for d in frame], dtype=np.float64) for frame in dets]
    ious = [box_iou_matrix(boxes[t], boxes[t + 1]) for t in range(len(dets) - 1)]
    weights = _edge_weights(ious, params)
    for c in range(num_classes):
        scores = [s[:, c] for s in all_scores]
        out[c] = _extract(dets, scores, weights, c, params, start_frame)
    return out


def temporal_iou(a: ActionTube, b: ActionTube) -> float:
    inter = min(a.end, b.end) - max(a.start, b.start) + 1
    if inter <= 0:
        return 0.0
    union = max(a.end, b.end) - min(a.start, b.start) + 1
    return inter / union


def tube_3d_iou(pred: ActionTube, gt: ActionTube) -> float:
    """Temporal IoU times the mean per-frame box IoU over shared frames."""
    lo, hi = max(pred.start, gt.start), min(pred.end, gt.end)
    if hi < lo:
        return 0.0
    spatial = [box_iou(pred.box_at(f), gt.box_at(f)) for f in range(lo, hi + 1)]
    return temporal_iou(pred, gt) * (sum(spatial) / len(spatial))
