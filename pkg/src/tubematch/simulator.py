"""Synthetic scenes for the matched-versus-naive shift experiment.

A scene holds ``K`` actors and ``N - K`` background entities. Each entity
has a fixed embedding; every frame the entities are dealt to query slots
by a fresh random permutation (when ``permute_slots`` is set), with a
little per-frame noise on top. Actor embeddings mix a class prototype
with an identity direction orthogonal to all prototypes, so a slot's
class scores can be read back from its features by projecting onto the
prototype bank. Shifting features between the wrong slots dilutes that
projection, which is what makes the alignment quality visible in mAP.

Random numbers come from numpy's PCG64 bit generator. Generation avoids
BLAS/LAPACK calls (plain elementwise products and ``np.sum``) so the
feature values do not depend on the linear-algebra backend.
"""

from __future__ import annotations

import dataclasses
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .core import ActionTube, BoundingBox, FeatureClip, FrameDetection
from .eval import THRESHOLDS, frame_map, video_map
from .matching import match_clip
from .shift import ShiftSpec, TrackAlignment, matched_shift, temporal_shift
from .tubes import LinkParams, link_video

__all__ = [
    "SceneConfig",
    "SyntheticScene",
    "SceneGenerationError",
    "generate_scene",
    "score_clip",
    "detections_from_clip",
    "trial_seed",
    "AblationResult",
    "run_ablation",
    "VARIANTS",
    "thread_count",
]

VARIANTS = ("no_shift", "naive_shift", "matched_shift")


class SceneGenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SceneConfig:
    """Scene parameters.

    ``embed_noise_sigma`` is relative: each frame an entity's embedding gets
    isotropic Gaussian noise whose expected norm is ``embed_noise_sigma``
    times the embedding's norm.
    """

    T: int = 8
    N: int = 100
    D: int = 256
    K: int = 4
    C: int = 21
    embed_noise_sigma: float = 0.05
    box_jitter_sigma: float = 2.0
    score_noise_sigma: float = 0.3
    permute_slots: bool = True
    seed: int = 0
    max_pair_cosine: float = 0.5
    class_weight: float = 0.6
    background_norm: float = 0.1
    image_width: float = 320.0
    image_height: float = 240.0
    max_attempts: int = 10000

    def __post_init__(self):
        for name in ("T", "N", "D", "K", "C", "max_attempts"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise ValueError(f"{name} must be an integer, got {value!r}")
        if self.T < 1:
            raise ValueError(f"T must be >= 1, got {self.T}")
        if self.N < 1:
            raise ValueError(f"N must be >= 1, got {self.N}")
        if self.K < 0 or self.K > self.N:
            raise ValueError(f"K must lie in [0, N={self.N}], got {self.K}")
        if self.C < 1:
            raise ValueError(f"C must be >= 1, got {self.C}")
        if self.D <= self.C:
            raise ValueError(f"D must exceed C so identities fit beside the class prototypes (D={self.D}, C={self.C})")
        for name in ("embed_noise_sigma", "box_jitter_sigma", "score_noise_sigma", "background_norm"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)!r}")
        if not 0.0 < self.class_weight < 1.0:
            raise ValueError(f"class_weight must lie in (0, 1), got {self.class_weight}")
        if not -1.0 <= self.max_pair_cosine <= 1.0:
            raise ValueError(f"max_pair_cosine must lie in [-1, 1], got {self.max_pair_cosine}")
        if not (self.image_width > 0 and self.image_height > 0):
            raise ValueError("image size must be positive")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")

    def replace(self, **changes) -> "SceneConfig":
        return dataclasses.replace(self, **changes)


@dataclass
class SyntheticScene:
    config: SceneConfig
    gt_tubes: List[ActionTube]
    clip: FeatureClip
    planted_perms: Optional[TrackAlignment]
    detections: List[List[FrameDetection]]
    prototypes: np.ndarray          # (C, D) orthonormal rows
    actor_classes: np.ndarray       # (K,)
    actor_slots: np.ndarray         # (T, K) slot of actor k at frame t
    slot_boxes: np.ndarray          # (T, N, 4) box emitted by each slot
    score_noise: np.ndarray         # (T, N, C)


def _norms(x):
    return np.sqrt(np.sum(x * x, axis=-1))


def _gram_schmidt(rng, count, dims):
    basis = np.zeros((count, dims))
    i = 0
    while i < count:
        v = rng.standard_normal(dims)
        for j in range(i):
            v = v - np.sum(v * basis[j]) * basis[j]
        n = np.sqrt(np.sum(v * v))
        if n < 1e-8:
            continue
        basis[i] = v / n
        i += 1
    return basis


def _actor_embeddings(rng, cfg, prototypes, classes):
    iw = np.sqrt(1.0 - cfg.class_weight ** 2)
    out = np.zeros((cfg.K, cfg.D))
    attempts = 0
    k = 0
    while k < cfg.K:
        attempts += 1
        if attempts > cfg.max_attempts:
            raise SceneGenerationError(
                f"could not draw {cfg.K} actor embeddings with pairwise cosine <= {cfg.max_pair_cosine} "
                f"in D={cfg.D} after {cfg.max_attempts} attempts")
        g = rng.standard_normal(cfg.D)
        for p in prototypes:
            g = g - np.sum(g * p) * p
        gn = np.sqrt(np.sum(g * g))
        if gn < 1e-8:
            continue
        e = cfg.class_weight * prototypes[classes[k]] + iw * (g / gn)
        e = e / np.sqrt(np.sum(e * e))
        if k and np.max(np.sum(out[:k] * e, axis=1)) > cfg.max_pair_cosine:
            continue
        out[k] = e
        k += 1
    return out


def _actor_tracks(rng, cfg):
    """Ground-truth boxes (K, T, 4) moving linearly inside the image."""
    W, H = cfg.image_width, cfg.image_height
    boxes = np.zeros((cfg.K, cfg.T, 4))
    for k in range(cfg.K):
        w = rng.uniform(0.15, 0.35) * W
        h = rng.uniform(0.3, 0.6) * H
        cx = rng.uniform(w / 2, W - w / 2)
        cy = rng.uniform(h / 2, H - h / 2)
        vx, vy = rng.uniform(-0.01, 0.01, size=2) * np.array([W, H])
        t = np.arange(cfg.T)
        x = np.clip(cx + vx * t, w / 2, W - w / 2)
        y = np.clip(cy + vy * t, h / 2, H - h / 2)
        boxes[k] = np.stack([x - w / 2, y - h / 2, x + w / 2, y + h / 2], axis=1)
    return boxes


def _jitter(rng, boxes, sigma, width, height):
    noisy = boxes + sigma * rng.standard_normal(boxes.shape)
    x1 = np.minimum(noisy[..., 0], noisy[..., 2])
    x2 = np.maximum(noisy[..., 0], noisy[..., 2])
    y1 = np.minimum(noisy[..., 1], noisy[..., 3])
    y2 = np.maximum(noisy[..., 1], noisy[..., 3])
    out = np.stack([x1, y1, x2, y2], axis=-1)
    out[..., 0::2] = np.clip(out[..., 0::2], 0.0, width)
    out[..., 1::2] = np.clip(out[..., 1::2], 0.0, height)
    return out


def _random_boxes(rng, shape, width, height):
    w = rng.uniform(0.05, 0.3, size=shape) * width
    h = rng.uniform(0.05, 0.4, size=shape) * height
    x1 = rng.uniform(0.0, 1.0, size=shape) * (width - w)
    y1 = rng.uniform(0.0, 1.0, size=shape) * (height - h)
    return np.stack([x1, y1, x1 + w, y1 + h], axis=-1)


def generate_scene(cfg: SceneConfig) -> SyntheticScene:
    """Build a scene; the result depends only on ``cfg`` (seed included)."""
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    T, N, D, K, C = cfg.T, cfg.N, cfg.D, cfg.K, cfg.C

    prototypes = _gram_schmidt(rng, C, D)
    classes = rng.integers(0, C, size=K)
    actors = _actor_embeddings(rng, cfg, prototypes, classes)
    bg_dirs = rng.standard_normal((N - K, D))
    bg = cfg.background_norm * bg_dirs / _norms(bg_dirs)[:, None]
    entities = np.concatenate([actors, bg], axis=0)

    # placement[t, e] = slot holding entity e at frame t
    if cfg.permute_slots:
        placement = np.stack([rng.permutation(N) for _ in range(T)])
    else:
        placement = np.tile(np.arange(N), (T, 1))
    noise = rng.standard_normal((T, N, D)) * (cfg.embed_noise_sigma / np.sqrt(D))
    per_frame = entities[None] + noise * _norms(entities)[None, :, None]
    data = np.zeros((T, N, D))
    for t in range(T):
        data[t, placement[t]] = per_frame[t]
    clip = FeatureClip(data)

    gt_boxes = _actor_tracks(rng, cfg)
    det_actor = _jitter(rng, gt_boxes, cfg.box_jitter_sigma, cfg.image_width, cfg.image_height)
    det_bg = _random_boxes(rng, (N - K, T), cfg.image_width, cfg.image_height)
    entity_boxes = np.concatenate([det_actor, det_bg], axis=0)  # (N, T, 4)
    slot_boxes = np.zeros((T, N, 4))
    for t in range(T):
        slot_boxes[t, placement[t]] = entity_boxes[:, t]
    score_noise = cfg.score_noise_sigma * rng.standard_normal((T, N, C))

    planted = None
    if T >= 2:
        maps = []
        for t in range(T - 1):
            sigma = np.empty(N, dtype=np.int64)
            sigma[placement[t]] = placement[t + 1]
            maps.append(sigma)
        planted = TrackAlignment(T, N, tuple(maps))

    gt_tubes = [
        ActionTube(int(classes[k]), 1.0,
                   tuple((t, BoundingBox(*map(float, gt_boxes[k, t]))) for t in range(T)))
        for k in range(K)
    ]
    scene = SyntheticScene(
        config=cfg, gt_tubes=gt_tubes, clip=clip, planted_perms=planted, detections=[],
        prototypes=prototypes, actor_classes=classes.astype(np.int64),
        actor_slots=placement[:, :K].copy(), slot_boxes=slot_boxes, score_noise=score_noise,
    )
    scene.detections = detections_from_clip(scene, clip)
    return scene


def score_clip(scene: SyntheticScene, clip: FeatureClip) -> np.ndarray:
    """Class scores (T, N, C) read back from (possibly shifted) features.

    Projection onto each class prototype, rescaled so a clean actor scores
    about 1 for its own class, plus the scene's fixed score noise, clipped
    to [0, 1].
    """
    data = clip.data
    proj = np.stack([np.sum(data * p, axis=-1) for p in scene.prototypes], axis=-1)
    return np.clip(proj / scene.config.class_weight + scene.score_noise, 0.0, 1.0)


def detections_from_clip(scene: SyntheticScene, clip: FeatureClip) -> List[List[FrameDetection]]:
    """One detection per slot per frame; boxes fixed, scores from ``clip``."""
    scores = score_clip(scene, clip)
    out = []
    for t in range(clip.frames):
        frame = []
        for n in range(clip.slots):
            box = BoundingBox(*map(float, scene.slot_boxes[t, n]))
            frame.append(FrameDetection(t, n, box, tuple(scores[t, n].tolist())))
        out.append(frame)
    return out


def trial_seed(base_seed: int, trial: int) -> int:
    """Independent 64-bit seed for trial ``trial`` of a run seeded ``base_seed``."""
    state = np.random.SeedSequence([int(base_seed), int(trial)]).generate_state(1, dtype=np.uint64)
    return int(state[0])


def thread_count() -> int:
    """Worker count from ``TUBEMATCH_THREADS`` (0 or unset means all CPUs)."""
    raw = os.environ.get("TUBEMATCH_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError as exc:
        raise ValueError(f"TUBEMATCH_THREADS must be an integer, got {raw!r}") from exc
    if n < 0:
        raise ValueError(f"TUBEMATCH_THREADS must be >= 0, got {n}")
    return n or (os.cpu_count() or 1)


@dataclass
class AblationResult:
    """Per-variant mean mAP over trials.

    ``means[variant][metric][threshold]`` with metric ``"frame"`` or
    ``"video"``; ``trials[i][variant][metric]`` keeps the per-trial values.
    """

    config: SceneConfig
    spec: ShiftSpec
    seeds: List[int]
    means: Dict[str, Dict[str, Dict[float, float]]]
    avg_50_95: Dict[str, Dict[str, float]]
    trials: List[Dict[str, Dict[str, Dict[float, float]]]] = field(repr=False, default_factory=list)

    def table_row(self, variant: str, metric: str) -> Dict[str, float]:
        """The three columns reported per metric: 0.5:0.95, 0.5 and 0.75."""
        m = self.means[variant][metric]
        return {"0.5:0.95": self.avg_50_95[variant][metric], "0.5": m[0.5], "0.75": m[0.75]}


def _evaluate_variant(scene, clip, link_params, thresholds):
    cfg = scene.config
    dets = detections_from_clip(scene, clip)
    tubes = link_video(dets, cfg.C, link_params)
    flat_tubes = [t for c in range(cfg.C) for t in tubes[c]]
    flat_dets = [d for frame in dets for d in frame]
    gts = {0: scene.gt_tubes}
    fm = frame_map({0: flat_dets}, gts, cfg.C, thresholds)
    vm = video_map({0: flat_tubes}, gts, cfg.C, thresholds)
    return {"frame": dict(fm.by_threshold), "video": dict(vm.by_threshold)}


def _run_trial(cfg, spec, link_params, thresholds):
    scene = generate_scene(cfg)
    naive_spec = spec.replace(alignment="index_naive")
    matched_spec = spec.replace(alignment="matched")
    clips = {"no_shift": scene.clip, "naive_shift": temporal_shift(scene.clip, naive_spec)}
    if cfg.T >= 2:
        clips["matched_shift"] = matched_shift(scene.clip, matched_spec, match_clip(scene.clip))
    else:
        clips["matched_shift"] = temporal_shift(scene.clip, naive_spec)
    return {v: _evaluate_variant(scene, clips[v], link_params, thresholds) for v in VARIANTS}


def run_ablation(cfg: SceneConfig, spec: ShiftSpec, trials: int,
                 link_params: LinkParams = LinkParams(),
                 thresholds: Sequence[float] = THRESHOLDS,
                 threads: Optional[int] = None) -> AblationResult:
    """No shift vs index-naive shift vs matched shift, averaged over trials.

    Trial ``i`` uses a scene seeded with ``trial_seed(cfg.seed, i)``.
    ``spec`` supplies the channel fractions; its alignment field is ignored.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    thresholds = tuple(thresholds)
    for needed in (0.5, 0.75):
        if needed not in thresholds:
            thresholds = thresholds + (needed,)
    seeds = [trial_seed(cfg.seed, i) for i in range(trials)]
    configs = [cfg.replace(seed=s) for s in seeds]
    workers = thread_count() if threads is None else max(1, threads)

    def job(c):
        return _run_trial(c, spec, link_params, thresholds)

    if workers > 1 and trials > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_trial = list(pool.map(job, configs))
    else:
        per_trial = [job(c) for c in configs]

    means, avg = {}, {}
    for v in VARIANTS:
        means[v], avg[v] = {}, {}
        for metric in ("frame", "video"):
            means[v][metric] = {
                thr: float(np.mean([r[v][metric][thr] for r in per_trial])) for thr in thresholds
            }
            if all(thr in thresholds for thr in THRESHOLDS):
                avg[v][metric] = sum(means[v][metric][thr] for thr in THRESHOLDS) / len(THRESHOLDS)
            else:
                avg[v][metric] = None
    return AblationResult(cfg, spec, seeds, means, avg, per_trial)
