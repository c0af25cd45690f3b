"""Numeric containers and box geometry shared across the toolkit."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

__all__ = [
    "FeatureClip",
    "BoundingBox",
    "FrameDetection",
    "ActionTube",
    "box_iou",
    "box_iou_matrix",
    "tube_from_boxes",
]


class FeatureClip:
    """A T x N x D stack of per-frame query features.

    Values are held as float64. The array exposed through :attr:`data` is a
    read-only view; use :meth:`set` (or build a new clip) to change values.
    """

    def __init__(self, data):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim != 3:
            raise ValueError(f"feature clip must be 3-D (T, N, D), got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise ValueError(f"feature clip dimensions must all be >= 1, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("feature clip contains non-finite values")
        self._data = arr

    @classmethod
    def zeros(cls, frames: int, slots: int, dims: int) -> "FeatureClip":
        return cls(np.zeros((frames, slots, dims)))

    @property
    def frames(self) -> int:
        return self._data.shape[0]

    @property
    def slots(self) -> int:
        return self._data.shape[1]

    @property
    def dims(self) -> int:
        return self._data.shape[2]

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self._data.shape

    @property
    def data(self) -> np.ndarray:
        view = self._data.view()
        view.flags.writeable = False
        return view

    def _check_index(self, t, n, d):
        for name, idx, size in (("t", t, self.frames), ("n", n, self.slots), ("d", d, self.dims)):
            if not isinstance(idx, (int, np.integer)) or isinstance(idx, bool):
                raise TypeError(f"index {name} must be an integer, got {idx!r}")
            if not 0 <= idx < size:
                raise IndexError(f"index {name}={idx} out of range [0, {size})")

    def get(self, t: int, n: int, d: int) -> float:
        self._check_index(t, n, d)
        return float(self._data[t, n, d])

    def set(self, t: int, n: int, d: int, value: float) -> None:
        self._check_index(t, n, d)
        value = float(value)
        if not math.isfinite(value):
            raise ValueError(f"refusing to store non-finite value {value!r}")
        self._data[t, n, d] = value

    def copy(self) -> "FeatureClip":
        return FeatureClip(self._data)

    def __eq__(self, other):
        if not isinstance(other, FeatureClip):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self._data, other._data))

    def __repr__(self):
        return f"FeatureClip(T={self.frames}, N={self.slots}, D={self.dims})"


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in absolute pixel corner form (x1, y1, x2, y2)."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        coords = (self.x1, self.y1, self.x2, self.y2)
        if not all(math.isfinite(c) for c in coords):
            raise ValueError(f"box coordinates must be finite: {coords}")
        if self.x1 > self.x2 or self.y1 > self.y2:
            raise ValueError(f"box corners out of order: {coords}")

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    def as_list(self) -> List[float]:
        return [self.x1, self.y1, self.x2, self.y2]

    def translate(self, dx: float, dy: float) -> "BoundingBox":
        return BoundingBox(self.x1 + dx, self.y1 + dy, self.x2 + dx, self.y2 + dy)


def box_iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes; 0 when the union is empty."""
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    inter = max(iw, 0.0) * max(ih, 0.0)
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return min(max(inter / union, 0.0), 1.0)


def box_iou_matrix(boxes_a, boxes_b) -> np.ndarray:
    """Pairwise IoU for (P, 4) and (G, 4) arrays of corner-form boxes."""
    a = np.asarray(boxes_a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(boxes_b, dtype=np.float64).reshape(-1, 4)
    iw = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    ih = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.clip(iw, 0.0, None) * np.clip(ih, 0.0, None)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=union > 0)
    return np.clip(out, 0.0, 1.0)


@dataclass(frozen=True)
class FrameDetection:
    """One scored box emitted by query slot ``slot_index`` at ``frame_index``."""

    frame_index: int
    slot_index: int
    box: BoundingBox
    class_scores: Tuple[float, ...]

    def __post_init__(self):
        scores = tuple(float(s) for s in self.class_scores)
        if not scores:
            raise ValueError("class_scores must not be empty")
        if any(not (0.0 <= s <= 1.0) for s in scores):
            raise ValueError(f"class scores must lie in [0, 1]: {scores}")
        if self.frame_index < 0 or self.slot_index < 0:
            raise ValueError("frame and slot indices must be non-negative")
        object.__setattr__(self, "class_scores", scores)

    @property
    def num_classes(self) -> int:
        return len(self.class_scores)


@dataclass(frozen=True)
class ActionTube:
    """A run of boxes on consecutive frames carrying one action class."""

    class_id: int
    score: float
    entries: Tuple[Tuple[int, BoundingBox], ...] = field(default=())

    def __post_init__(self):
        entries = tuple((int(f), b) for f, b in self.entries)
        if not entries:
            raise ValueError("an action tube needs at least one entry")
        if self.class_id < 0:
            raise ValueError(f"class_id must be non-negative, got {self.class_id}")
        for (f0, _), (f1, _) in zip(entries, entries[1:]):
            if f1 != f0 + 1:
                raise ValueError(f"tube frames must be consecutive, got {f0} then {f1}")
        object.__setattr__(self, "entries", entries)

    @property
    def start(self) -> int:
        return self.entries[0][0]

    @property
    def end(self) -> int:
        """Last frame index covered (inclusive)."""
        return self.entries[-1][0]

    @property
    def frames(self) -> List[int]:
        return [f for f, _ in self.entries]

    @property
    def boxes(self) -> List[BoundingBox]:
        return [b for _, b in self.entries]

    def __len__(self):
        return len(self.entries)

    def box_at(self, frame: int) -> BoundingBox:
        if not self.start <= frame <= self.end:
            raise KeyError(frame)
        return self.entries[frame - self.start][1]


def tube_from_boxes(class_id: int, score: float, start: int, boxes: Sequence[BoundingBox]) -> ActionTube:
    return ActionTube(class_id, score, tuple((start + i, b) for i, b in enumerate(boxes)))
