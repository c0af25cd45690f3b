"""Query matching between adjacent frames.

Slots of frame ``t`` and ``t + 1`` are paired by a minimum-cost perfect
assignment with cost ``1 - cosine similarity``, i.e. the pairing that
maximises total similarity. The assignment solver is a shortest
augmenting path Hungarian method with dual potentials; ties between
equally cheap assignments are broken towards the lexicographically
smallest permutation.
"""

from __future__ import annotations

import numpy as np

from .core import FeatureClip
from .shift import TrackAlignment

__all__ = [
    "cosine_similarity",
    "similarity_matrix",
    "hungarian",
    "assignment_cost",
    "match_pair",
    "match_clip",
    "compose_to_reference",
    "invert_permutation",
]

# Reduced costs within this (relative) band of zero count as tight when
# searching for the lexicographically smallest optimum.
_TIGHT_RTOL = 1e-10


def cosine_similarity(u, v) -> float:
    """Cosine of the angle between ``u`` and ``v``; 0 if either is all zeros."""
    u = np.asarray(u, dtype=np.float64).reshape(-1)
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if u.shape != v.shape:
        raise ValueError(f"vector lengths differ: {u.size} vs {v.size}")
    nu = np.sqrt(np.sum(u * u))
    nv = np.sqrt(np.sum(v * v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.clip(np.sum(u * v) / (nu * nv), -1.0, 1.0))


def similarity_matrix(qs_t, qs_t1) -> np.ndarray:
    """N x N cosine similarities between the queries of two frames."""
    a = np.asarray(qs_t, dtype=np.float64)
    b = np.asarray(qs_t1, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape != b.shape:
        raise ValueError(f"query sets must both be N x D with equal shapes, got {a.shape} and {b.shape}")
    na = np.sqrt(np.sum(a * a, axis=1))
    nb = np.sqrt(np.sum(b * b, axis=1))
    # Explicit multiply-and-sum keeps the result independent of the BLAS build.
    dots = np.sum(a[:, None, :] * b[None, :, :], axis=2)
    denom = na[:, None] * nb[None, :]
    sim = np.zeros_like(dots)
    np.divide(dots, denom, out=sim, where=denom > 0)
    return np.clip(sim, -1.0, 1.0)


def _solve_potentials(cost):
    """Shortest augmenting path assignment (1-based internals).

    Returns the row->column assignment and the dual potentials ``u``, ``v``
    with ``cost[i, j] - u[i] - v[j] >= 0`` and equality on the assignment.
    """
    n = cost.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    owner = np.zeros(n + 1, dtype=np.int64)  # owner[j]: row holding column j, 0 = free
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        owner[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = owner[j0]
            free = ~used[1:]
            cur = cost[i0 - 1] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            masked = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(masked)) + 1
            delta = masked[j1 - 1]
            u[owner[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if owner[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            owner[j0] = owner[j1]
            j0 = j1
    assign = np.empty(n, dtype=np.int64)
    assign[owner[1:] - 1] = np.arange(n)
    return assign, u[1:], v[1:]


def _has_perfect_matching(adj, rows, cols):
    """Kuhn's augmenting-path test on the sub-graph ``rows`` x ``cols``."""
    cols = list(cols)
    col_set = set(cols)
    match_col = {}

    def try_row(r, seen):
        for c in adj[r]:
            if c in col_set and c not in seen:
                seen.add(c)
                if c not in match_col or try_row(match_col[c], seen):
                    match_col[c] = r
                    return True
        return False

    for r in rows:
        if not try_row(r, set()):
            return False
    return True


def _lexicographic_tight(assign, reduced, tol):
    n = reduced.shape[0]
    tight = reduced <= tol
    counts = tight.sum(axis=1)
    if np.all(counts == 1):
        return assign
    adj = [list(np.flatnonzero(tight[r])) for r in range(n)]
    chosen = np.empty(n, dtype=np.int64)
    remaining = set(range(n))
    for r in range(n):
        for c in adj[r]:
            if c not in remaining:
                continue
            rest = remaining - {c}
            if _has_perfect_matching(adj, range(r + 1, n), rest):
                chosen[r] = c
                remaining = rest
                break
        else:  # pragma: no cover - the solver's own assignment is always tight
            return assign
    return chosen


def hungarian(cost) -> np.ndarray:
    """Minimum-cost perfect assignment for a square cost matrix.

    Returns ``sigma`` with ``sigma[i]`` the column given to row ``i``.
    Among optimal assignments the lexicographically smallest is returned.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ValueError(f"cost matrix must be square, got shape {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix contains non-finite entries")
    n = cost.shape[0]
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    assign, u, v = _solve_potentials(cost)
    reduced = cost - u[:, None] - v[None, :]
    scale = max(1.0, float(np.max(np.abs(cost))))
    return _lexicographic_tight(assign, reduced, _TIGHT_RTOL * scale)


def assignment_cost(cost, sigma) -> float:
    """Sum of ``cost[i, sigma[i]]`` accumulated in row order."""
    cost = np.asarray(cost, dtype=np.float64)
    total = 0.0
    for i, j in enumerate(sigma):
        total += cost[i, j]
    return total


def invert_permutation(sigma) -> np.ndarray:
    sigma = np.asarray(sigma, dtype=np.int64)
    inv = np.empty_like(sigma)
    inv[sigma] = np.arange(sigma.size)
    return inv


def match_pair(qs_t, qs_t1) -> np.ndarray:
    """Permutation pairing each query at frame t with one at frame t+1."""
    sim = similarity_matrix(qs_t, qs_t1)
    return hungarian(1.0 - sim)


def match_clip(clip: FeatureClip) -> TrackAlignment:
    """Match every pair of adjacent frames of ``clip``."""
    if clip.frames < 2:
        raise ValueError(f"matching needs at least two frames, clip has {clip.frames}")
    data = clip.data
    maps = tuple(match_pair(data[t], data[t + 1]) for t in range(clip.frames - 1))
    return TrackAlignment(clip.frames, clip.slots, maps)


def compose_to_reference(align: TrackAlignment, t: int) -> np.ndarray:
    """Map frame-0 slots to the slots they are tracked to at frame ``t``."""
    if not 0 <= t < align.n_frames:
        raise IndexError(f"frame {t} out of range [0, {align.n_frames})")
    track = np.arange(align.n_slots)
    for perm in align.pair_maps[:t]:
        track = perm[track]
    return track
