from collections import Counter
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tubematch.core import FeatureClip
from tubematch.shift import ShiftSpec, TrackAlignment, channel_split, matched_shift, temporal_shift

EIGHTH, QUARTER = Fraction(1, 8), Fraction(1, 4)


def naive(fwd, bwd, **kw):
    return ShiftSpec(fwd, bwd, alignment="index_naive", **kw)


def matched(fwd, bwd, **kw):
    return ShiftSpec(fwd, bwd, alignment="matched", **kw)


def reference_shift(data, d_fwd, d_bwd, pair_maps):
    """Element-by-element reading of the shift rules (zero boundary)."""
    T, N, D = data.shape
    out = np.zeros_like(data)
    for t in range(T):
        for i in range(N):
            for d in range(D):
                if d >= d_fwd + d_bwd:
                    out[t, i, d] = data[t, i, d]
    for t in range(T - 1):
        sigma = pair_maps[t]
        for i in range(N):
            for d in range(d_fwd):
                out[t + 1, sigma[i], d] = data[t, i, d]
            for d in range(d_fwd, d_fwd + d_bwd):
                out[t, i, d] = data[t + 1, sigma[i], d]
    return out


@pytest.mark.parametrize("dims,fracs,expected", [
    (256, (EIGHTH, EIGHTH), (32, 32)),
    (10, (EIGHTH, EIGHTH), (1, 1)),
    (4, (0, 0), (0, 0)),
    (10, (Fraction(1, 10), Fraction(3, 10)), (1, 3)),
])
def test_channel_split(dims, fracs, expected):
    assert channel_split(dims, naive(*fracs)) == expected


def test_fractions_over_one_rejected():
    with pytest.raises(ValueError):
        ShiftSpec(Fraction(3, 4), Fraction(1, 2))
    with pytest.raises(ValueError):
        ShiftSpec(-0.1, 0)


def test_spec_accepts_strings_and_floats():
    spec = ShiftSpec("1/8", 0.25)
    assert spec.forward_fraction == EIGHTH and spec.backward_fraction == QUARTER
    with pytest.raises(ValueError):
        ShiftSpec(position="neck")


def test_hand_case_three_frames():
    data = np.zeros((3, 1, 3))
    for t in range(3):
        data[t, 0] = (t + 1, 10 * (t + 1), 100 * (t + 1))
    # D=3 with 1/3 each way gives D_f = D_d = 1
    out = temporal_shift(FeatureClip(data), naive(Fraction(1, 3), Fraction(1, 3))).data
    assert out[0, 0].tolist() == [0, 20, 100]
    assert out[1, 0].tolist() == [1, 30, 200]
    assert out[2, 0].tolist() == [2, 0, 300]


def test_single_frame_zero_fills_shifted_blocks():
    data = np.arange(1, 17, dtype=float).reshape(1, 2, 8)
    out = temporal_shift(FeatureClip(data), naive(QUARTER, QUARTER)).data
    assert np.all(out[:, :, :4] == 0)
    assert np.array_equal(out[:, :, 4:], data[:, :, 4:])


def test_copy_boundary_mode():
    data = np.arange(1, 25, dtype=float).reshape(3, 1, 8)
    out = temporal_shift(FeatureClip(data), naive(QUARTER, QUARTER, boundary="copy")).data
    assert np.array_equal(out[0, :, :2], data[0, :, :2])
    assert np.array_equal(out[2, :, 2:4], data[2, :, 2:4])
    assert np.array_equal(out[1, :, :2], data[0, :, :2])


def test_zero_fractions_identity():
    rng = np.random.default_rng(0)
    clip = FeatureClip(rng.normal(size=(4, 3, 5)))
    assert temporal_shift(clip, naive(0, 0)) == clip
    align = TrackAlignment(4, 3, tuple(rng.permutation(3) for _ in range(3)))
    assert matched_shift(clip, matched(0, 0), align) == clip


def test_matched_swap_hand_case():
    data = np.zeros((2, 2, 2))
    data[0, 0, 0] = 5
    data[0, 1, 0] = 7
    align = TrackAlignment(2, 2, ([1, 0],))
    # D=2, forward 1/2 gives D_f = 1, D_d = 0
    out = matched_shift(FeatureClip(data), matched(Fraction(1, 2), 0), align).data
    assert out[1, 1, 0] == 5
    assert out[1, 0, 0] == 7


def test_matched_dimension_mismatch():
    clip = FeatureClip.zeros(3, 2, 4)
    with pytest.raises(ValueError):
        matched_shift(clip, matched(QUARTER, QUARTER), TrackAlignment.identity(3, 3))
    with pytest.raises(ValueError):
        matched_shift(clip, matched(QUARTER, QUARTER), TrackAlignment.identity(2, 2))


def test_alignment_mode_preconditions():
    clip = FeatureClip.zeros(2, 2, 4)
    with pytest.raises(ValueError):
        temporal_shift(clip, matched(QUARTER, QUARTER))
    with pytest.raises(ValueError):
        matched_shift(clip, naive(QUARTER, QUARTER), TrackAlignment.identity(2, 2))


def test_alignment_rejects_non_permutation():
    with pytest.raises(ValueError):
        TrackAlignment(2, 3, ([0, 0, 1],))
    with pytest.raises(ValueError):
        TrackAlignment(3, 2, ([0, 1],))


@st.composite
def clip_and_alignment(draw):
    T = draw(st.integers(1, 6))
    N = draw(st.integers(1, 5))
    D = draw(st.integers(1, 16))
    seed = draw(st.integers(0, 2 ** 32 - 1))
    rng = np.random.default_rng(seed)
    data = rng.normal(size=(T, N, D))
    align = TrackAlignment(T, N, tuple(rng.permutation(N) for _ in range(T - 1)))
    fwd = draw(st.sampled_from([0, EIGHTH, QUARTER, Fraction(1, 2)]))
    bwd = draw(st.sampled_from([0, EIGHTH, QUARTER]))
    return FeatureClip(data), align, fwd, bwd


@settings(max_examples=150, deadline=None)
@given(clip_and_alignment())
def test_matched_shift_matches_reference(case):
    clip, align, fwd, bwd = case
    d_fwd, d_bwd = channel_split(clip.dims, matched(fwd, bwd))
    expected = reference_shift(np.array(clip.data), d_fwd, d_bwd, align.pair_maps)
    out = matched_shift(clip, matched(fwd, bwd), align).data
    assert np.array_equal(out, expected)


@settings(max_examples=150, deadline=None)
@given(clip_and_alignment())
def test_shift_invariants(case):
    clip, align, fwd, bwd = case
    src = clip.data
    d_fwd, d_bwd = channel_split(clip.dims, matched(fwd, bwd))
    stop = d_fwd + d_bwd
    out = matched_shift(clip, matched(fwd, bwd), align).data
    assert np.array_equal(out[:, :, stop:], src[:, :, stop:])
    assert np.all(out[0, :, :d_fwd] == 0)
    assert np.all(out[-1, :, d_fwd:stop] == 0)
    assert Counter(out[1:, :, :d_fwd].ravel().tolist()) == Counter(src[:-1, :, :d_fwd].ravel().tolist())
    assert Counter(out[:-1, :, d_fwd:stop].ravel().tolist()) == Counter(src[1:, :, d_fwd:stop].ravel().tolist())
    naive_out = temporal_shift(clip, naive(fwd, bwd)).data
    ident = matched_shift(clip, matched(fwd, bwd), TrackAlignment.identity(clip.frames, clip.slots)).data
    assert naive_out.tobytes() == ident.tobytes()
