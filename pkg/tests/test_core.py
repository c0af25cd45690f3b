import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tubematch.core import ActionTube, BoundingBox, FeatureClip, FrameDetection, box_iou, box_iou_matrix


def test_iou_identity():
    b = BoundingBox(0, 0, 10, 10)
    assert box_iou(b, b) == 1.0


def test_iou_disjoint():
    assert box_iou(BoundingBox(0, 0, 10, 10), BoundingBox(20, 20, 30, 30)) == 0.0


def test_iou_half_overlap():
    # intersection 5*10 = 50, union 100 + 100 - 50 = 150
    assert box_iou(BoundingBox(0, 0, 10, 10), BoundingBox(5, 0, 15, 10)) == pytest.approx(50 / 150, abs=1e-15)


def test_iou_degenerate_boxes():
    p = BoundingBox(3, 3, 3, 3)
    assert box_iou(p, p) == 0.0
    assert box_iou(p, BoundingBox(0, 0, 10, 10)) == 0.0


def test_box_rejects_inverted_corners():
    with pytest.raises(ValueError):
        BoundingBox(5, 0, 1, 10)


coord = st.floats(-500, 500, allow_nan=False)
size = st.floats(0, 200, allow_nan=False)


@st.composite
def boxes(draw):
    x, y, w, h = draw(coord), draw(coord), draw(size), draw(size)
    return BoundingBox(x, y, x + w, y + h)


@given(boxes(), boxes())
def test_iou_symmetric_and_bounded(a, b):
    v = box_iou(a, b)
    assert v == box_iou(b, a)
    assert 0.0 <= v <= 1.0


# eighth-pixel grid: integer translations stay exact in floating point
grid = st.integers(-4000, 4000).map(lambda k: k / 8)
grid_size = st.integers(0, 1600).map(lambda k: k / 8)


@st.composite
def grid_boxes(draw):
    x, y, w, h = draw(grid), draw(grid), draw(grid_size), draw(grid_size)
    return BoundingBox(x, y, x + w, y + h)


@given(grid_boxes(), grid_boxes(), st.integers(-300, 300), st.integers(-300, 300))
def test_iou_translation_invariant(a, b, dx, dy):
    assert box_iou(a.translate(dx, dy), b.translate(dx, dy)) == pytest.approx(box_iou(a, b), abs=1e-12)


@given(boxes(), boxes())
def test_iou_one_iff_identical(a, b):
    if box_iou(a, b) == 1.0:
        assert a.area > 0
        assert (a.x1, a.y1, a.x2, a.y2) == pytest.approx((b.x1, b.y1, b.x2, b.y2), abs=1e-9)
    if a.area > 0:
        assert box_iou(a, a) == 1.0


def test_iou_matrix_matches_scalar():
    rng = np.random.default_rng(3)
    xy = rng.uniform(0, 50, (7, 2))
    wh = rng.uniform(0, 30, (7, 2))
    arr = np.concatenate([xy, xy + wh], axis=1)
    bs = [BoundingBox(*r) for r in arr]
    mat = box_iou_matrix(arr[:4], arr[4:])
    for i in range(4):
        for j in range(3):
            assert mat[i, j] == pytest.approx(box_iou(bs[i], bs[4 + j]), abs=1e-12)


def test_clip_get_set_roundtrip():
    clip = FeatureClip.zeros(2, 3, 4)
    clip.set(0, 0, 0, 3.5)
    assert clip.get(0, 0, 0) == 3.5


def test_clip_rejects_nan_write():
    clip = FeatureClip.zeros(1, 1, 1)
    with pytest.raises(ValueError):
        clip.set(0, 0, 0, math.nan)
    with pytest.raises(ValueError):
        clip.set(0, 0, 0, math.inf)


def test_clip_range_check():
    clip = FeatureClip.zeros(2, 3, 4)
    with pytest.raises(IndexError):
        clip.get(2, 0, 0)
    with pytest.raises(IndexError):
        clip.get(0, -1, 0)
    with pytest.raises(IndexError):
        clip.set(0, 0, 4, 1.0)


def test_clip_construction_checks():
    with pytest.raises(ValueError):
        FeatureClip(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        FeatureClip(np.zeros((0, 2, 2)))
    with pytest.raises(ValueError):
        FeatureClip(np.full((1, 1, 1), np.nan))


def test_clip_data_is_read_only():
    clip = FeatureClip.zeros(1, 1, 2)
    with pytest.raises(ValueError):
        clip.data[0, 0, 0] = 1.0


def test_detection_score_checks():
    b = BoundingBox(0, 0, 1, 1)
    FrameDetection(0, 0, b, (0.0, 1.0))
    with pytest.raises(ValueError):
        FrameDetection(0, 0, b, (1.2,))
    with pytest.raises(ValueError):
        FrameDetection(0, 0, b, ())


def test_tube_requires_consecutive_frames():
    b = BoundingBox(0, 0, 1, 1)
    tube = ActionTube(0, 1.0, ((3, b), (4, b)))
    assert (tube.start, tube.end, len(tube)) == (3, 4, 2)
    with pytest.raises(ValueError):
        ActionTube(0, 1.0, ((0, b), (2, b)))
    with pytest.raises(ValueError):
        ActionTube(0, 1.0, ())
