"""Temporal feature shift over query-feature clips.

Two flavours are provided. :func:`temporal_shift` moves channel blocks
between equal slot indices of neighbouring frames. :func:`matched_shift`
moves them along a :class:`TrackAlignment`, so that a block leaves slot
``i`` at frame ``t`` and lands on the slot that was matched to it at
frame ``t + 1`` (and symmetrically for the backward block).

Channel layout along D: ``[0, D_f)`` travels forward in time,
``[D_f, D_f + D_d)`` travels backward, the rest stays in place.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence, Tuple

import numpy as np

from .core import FeatureClip

__all__ = [
    "POSITIONS",
    "ShiftSpec",
    "TrackAlignment",
    "channel_split",
    "temporal_shift",
    "matched_shift",
    "apply_shift",
    "parse_fraction",
]

POSITIONS = ("backbone", "encoder_input", "encoder", "encoder_output", "decoder", "query")
ALIGNMENTS = ("index_naive", "matched")
BOUNDARIES = ("zero", "copy")


def parse_fraction(value) -> Fraction:
    """Accept ``"1/8"``, ``0.125``, ``Fraction(1, 8)`` and friends."""
    if isinstance(value, Fraction):
        frac = value
    elif isinstance(value, str):
        try:
            frac = Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise ValueError(f"not a fraction: {value!r}") from exc
    else:
        fval = float(value)
        if not math.isfinite(fval):
            raise ValueError(f"fraction must be finite, got {value!r}")
        frac = Fraction(fval)
    if not 0 <= frac <= 1:
        raise ValueError(f"fraction must lie in [0, 1], got {value!r}")
    return frac


@dataclass(frozen=True)
class ShiftSpec:
    """Shift configuration.

    ``position`` is a label recording where in a detector the shift would
    sit; it does not change the arithmetic. ``boundary`` picks what fills
    positions with no source frame: ``"zero"`` (default) or ``"copy"``
    (keep the frame's own values).
    """

    forward_fraction: Fraction = Fraction(1, 8)
    backward_fraction: Fraction = Fraction(1, 8)
    position: str = "query"
    alignment: str = "index_naive"
    boundary: str = "zero"

    def __post_init__(self):
        fwd = parse_fraction(self.forward_fraction)
        bwd = parse_fraction(self.backward_fraction)
        if fwd + bwd > 1:
            raise ValueError(f"forward + backward fraction exceeds 1: {fwd} + {bwd}")
        if self.position not in POSITIONS:
            raise ValueError(f"unknown shift position {self.position!r}; expected one of {POSITIONS}")
        if self.alignment not in ALIGNMENTS:
            raise ValueError(f"unknown alignment {self.alignment!r}; expected one of {ALIGNMENTS}")
        if self.boundary not in BOUNDARIES:
            raise ValueError(f"unknown boundary mode {self.boundary!r}; expected one of {BOUNDARIES}")
        object.__setattr__(self, "forward_fraction", fwd)
        object.__setattr__(self, "backward_fraction", bwd)

    def replace(self, **changes) -> "ShiftSpec":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class TrackAlignment:
    """Slot correspondences between each pair of adjacent frames.

    ``pair_maps[t][i]`` is the slot at frame ``t + 1`` matched to slot ``i``
    at frame ``t``.
    """

    n_frames: int
    n_slots: int
    pair_maps: Tuple[np.ndarray, ...]

    def __post_init__(self):
        if self.n_frames < 1 or self.n_slots < 1:
            raise ValueError("alignment needs at least one frame and one slot")
        maps = tuple(np.array(p, dtype=np.int64).reshape(-1) for p in self.pair_maps)
        if len(maps) != self.n_frames - 1:
            raise ValueError(f"expected {self.n_frames - 1} pair maps, got {len(maps)}")
        ref = np.arange(self.n_slots)
        for t, perm in enumerate(maps):
            if perm.shape != (self.n_slots,) or not np.array_equal(np.sort(perm), ref):
                raise ValueError(f"pair map {t} is not a permutation of 0..{self.n_slots - 1}")
            perm.flags.writeable = False
        object.__setattr__(self, "pair_maps", maps)

    @classmethod
    def identity(cls, n_frames: int, n_slots: int) -> "TrackAlignment":
        return cls(n_frames, n_slots, tuple(np.arange(n_slots) for _ in range(n_frames - 1)))

    @classmethod
    def from_lists(cls, pair_maps: Sequence[Sequence[int]], n_slots: int = None) -> "TrackAlignment":
        pair_maps = [list(p) for p in pair_maps]
        if n_slots is None:
            if not pair_maps:
                raise ValueError("n_slots is required when there are no pair maps")
            n_slots = len(pair_maps[0])
        return cls(len(pair_maps) + 1, n_slots, tuple(pair_maps))

    def to_lists(self):
        return [[int(x) for x in p] for p in self.pair_maps]

    def __eq__(self, other):
        if not isinstance(other, TrackAlignment):
            return NotImplemented
        return (self.n_frames, self.n_slots) == (other.n_frames, other.n_slots) and all(
            np.array_equal(a, b) for a, b in zip(self.pair_maps, other.pair_maps))


def channel_split(dims: int, spec: ShiftSpec) -> Tuple[int, int]:
    """Number of forward and backward channels for a feature width ``dims``."""
    if dims < 1:
        raise ValueError(f"feature width must be >= 1, got {dims}")
    # Fractions keep the floor exact (no 0.1 * 10 = 0.999... surprises).
    d_fwd = math.floor(spec.forward_fraction * dims)
    d_bwd = math.floor(spec.backward_fraction * dims)
    if d_fwd + d_bwd > dims:
        raise ValueError("shifted channels exceed the feature width")
    return d_fwd, d_bwd


def _fill_boundaries(out, src, d_fwd, d_bwd, boundary):
    if boundary == "copy":
        out[0, :, :d_fwd] = src[0, :, :d_fwd]
        out[-1, :, d_fwd:d_fwd + d_bwd] = src[-1, :, d_fwd:d_fwd + d_bwd]
    # zero mode: the output buffer starts zeroed


def temporal_shift(clip: FeatureClip, spec: ShiftSpec) -> FeatureClip:
    """Shift channel blocks between the same slot index of adjacent frames."""
    if spec.alignment != "index_naive":
        raise ValueError("temporal_shift requires spec.alignment == 'index_naive'; use matched_shift")
    src = clip.data
    d_fwd, d_bwd = channel_split(clip.dims, spec)
    stop = d_fwd + d_bwd
    out = np.zeros_like(src)
    out[1:, :, :d_fwd] = src[:-1, :, :d_fwd]
    out[:-1, :, d_fwd:stop] = src[1:, :, d_fwd:stop]
    out[:, :, stop:] = src[:, :, stop:]
    _fill_boundaries(out, src, d_fwd, d_bwd, spec.boundary)
    return FeatureClip(out)


def matched_shift(clip: FeatureClip, spec: ShiftSpec, align: TrackAlignment) -> FeatureClip:
    """Shift channel blocks along matched slot tracks instead of raw indices."""
    if spec.alignment != "matched":
        raise ValueError("matched_shift requires spec.alignment == 'matched'")
    if (align.n_frames, align.n_slots) != (clip.frames, clip.slots):
        raise ValueError(
            f"alignment is {align.n_frames}x{align.n_slots} but clip is {clip.frames}x{clip.slots}")
    src = clip.data
    d_fwd, d_bwd = channel_split(clip.dims, spec)
    stop = d_fwd + d_bwd
    out = np.zeros_like(src)
    for t, perm in enumerate(align.pair_maps):
        out[t + 1, perm, :d_fwd] = src[t, :, :d_fwd]
        out[t, :, d_fwd:stop] = src[t + 1, perm, d_fwd:stop]
    out[:, :, stop:] = src[:, :, stop:]
    _fill_boundaries(out, src, d_fwd, d_bwd, spec.boundary)
    return FeatureClip(out)


def apply_shift(clip: FeatureClip, spec: ShiftSpec, align: TrackAlignment = None) -> FeatureClip:
    """Dispatch on ``spec.alignment``."""
    if spec.alignment == "matched":
        if align is None:
            raise ValueError("matched alignment requested but no TrackAlignment given")
        return matched_shift(clip, spec, align)
    return temporal_shift(clip, spec)
