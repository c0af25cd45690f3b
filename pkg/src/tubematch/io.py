"""On-disk formats.

QFT1 feature files::

    b"QFT1" | T:u32 | N:u32 | D:u32 | T*N*D float32, all little-endian,
    payload in (t, n, d) row-major order

Detections, tubes and ground truth are JSON-lines, one record per line,
each carrying ``schema_version``. Scene configs are flat ``key = value``
text with ``#`` comments, keys named after :class:`SceneConfig` fields.
"""

from __future__ import annotations

import dataclasses
import json
import os
import struct
import tempfile
from collections import OrderedDict
from pathlib import Path
from typing import Iterable, List

import numpy as np

from .core import ActionTube, BoundingBox, FeatureClip, FrameDetection
from .shift import TrackAlignment
from .simulator import SceneConfig

SCHEMA_VERSION = 1
MAGIC = b"QFT1"
_HEADER = struct.Struct("<4sIII")

_UMASK = os.umask(0)
os.umask(_UMASK)


class FormatError(ValueError):
    pass


class ConfigError(ValueError):
    pass


# -- atomic output ---------------------------------------------------------

class AtomicOutputs:
    """Stage files next to their targets and rename them all on success.

    Used as a context manager; if the block raises, staged files are
    removed and no target is touched.
    """

    def __init__(self):
        self._staged = []

    def write_bytes(self, path, data: bytes):
        path = Path(path)
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent or ".")
        self._staged.append((tmp, path))
        os.chmod(tmp, 0o666 & ~_UMASK)
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)

    def write_text(self, path, text: str):
        self.write_bytes(path, text.encode("utf-8"))

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            for tmp, target in self._staged:
                os.replace(tmp, target)
        else:
            for tmp, _ in self._staged:
                try:
                    os.unlink(tmp)
                except FileNotFoundError:
                    pass
        self._staged = []
        return False


# -- QFT1 ------------------------------------------------------------------

def encode_features(clip: FeatureClip) -> bytes:
    data32 = clip.data.astype("<f4")
    if not np.all(np.isfinite(data32)):
        raise FormatError("feature values overflow float32")
    return _HEADER.pack(MAGIC, clip.frames, clip.slots, clip.dims) + data32.tobytes(order="C")


def decode_features(raw: bytes) -> FeatureClip:
    if len(raw) < _HEADER.size:
        raise FormatError(f"feature file too short for a header ({len(raw)} bytes)")
    magic, T, N, D = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if min(T, N, D) < 1:
        raise FormatError(f"header sizes must be >= 1, got T={T} N={N} D={D}")
    expected = T * N * D * 4
    payload = raw[_HEADER.size:]
    if len(payload) != expected:
        raise FormatError(f"payload is {len(payload)} bytes, header T={T} N={N} D={D} needs {expected}")
    values = np.frombuffer(payload, dtype="<f4").reshape(T, N, D)
    if not np.all(np.isfinite(values)):
        raise FormatError("feature payload contains non-finite values")
    return FeatureClip(values.astype(np.float64))


def write_features(path, clip: FeatureClip):
    with AtomicOutputs() as out:
        out.write_bytes(path, encode_features(clip))


def read_features(path) -> FeatureClip:
    return decode_features(Path(path).read_bytes())


# -- JSON helpers -----------------------------------------------------------

def dumps_json(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def dumps_jsonl(records: Iterable[dict]) -> str:
    return "".join(json.dumps(r, separators=(",", ":"), allow_nan=False) + "\n" for r in records)


def _load_jsonl(path):
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(rec, dict):
                raise FormatError(f"{path}:{lineno}: record must be a JSON object")
            version = rec.get("schema_version")
            if version != SCHEMA_VERSION:
                raise FormatError(f"{path}:{lineno}: unsupported schema_version {version!r}")
            records.append((lineno, rec))
    return records


def _box(values, where):
    if not isinstance(values, list) or len(values) != 4:
        raise FormatError(f"{where}: box must be a list of 4 numbers")
    try:
        return BoundingBox(*(float(v) for v in values))
    except (TypeError, ValueError) as exc:
        raise FormatError(f"{where}: {exc}") from exc


# -- detections -------------------------------------------------------------

def detection_record(video_id, det: FrameDetection) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "video_id": video_id,
        "frame": det.frame_index,
        "slot": det.slot_index,
        "box": det.box.as_list(),
        "scores": list(det.class_scores),
    }


def read_detections(path) -> "OrderedDict[str, List[FrameDetection]]":
    """Detections grouped by video id, videos in first-appearance order."""
    out: "OrderedDict[str, List[FrameDetection]]" = OrderedDict()
    for lineno, rec in _load_jsonl(path):
        where = f"{path}:{lineno}"
        try:
            det = FrameDetection(int(rec["frame"]), int(rec["slot"]), _box(rec["box"], where),
                                 tuple(float(s) for s in rec["scores"]))
            vid = rec["video_id"]
        except KeyError as exc:
            raise FormatError(f"{where}: missing field {exc.args[0]!r}") from exc
        except (TypeError, ValueError) as exc:
            if isinstance(exc, FormatError):
                raise
            raise FormatError(f"{where}: {exc}") from exc
        out.setdefault(vid, []).append(det)
    return out


def group_by_frame(dets: List[FrameDetection]):
    """``(start_frame, per_frame_lists)`` covering min..max frame."""
    if not dets:
        return 0, []
    lo = min(d.frame_index for d in dets)
    hi = max(d.frame_index for d in dets)
    frames = [[] for _ in range(hi - lo + 1)]
    for d in dets:
        frames[d.frame_index - lo].append(d)
    return lo, frames


# -- tubes ------------------------------------------------------------------

def tube_record(video_id, tube: ActionTube) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "video_id": video_id,
        "class_id": tube.class_id,
        "score": tube.score,
        "frames": tube.frames,
        "boxes": [b.as_list() for b in tube.boxes],
    }


def read_tubes(path) -> "OrderedDict[str, List[ActionTube]]":
    out: "OrderedDict[str, List[ActionTube]]" = OrderedDict()
    for lineno, rec in _load_jsonl(path):
        where = f"{path}:{lineno}"
        try:
            frames, boxes = rec["frames"], rec["boxes"]
            if len(frames) != len(boxes):
                raise FormatError(f"{where}: frames and boxes differ in length")
            entries = tuple((int(f), _box(b, where)) for f, b in zip(frames, boxes))
            tube = ActionTube(int(rec["class_id"]), float(rec.get("score", 1.0)), entries)
            vid = rec["video_id"]
        except KeyError as exc:
            raise FormatError(f"{where}: missing field {exc.args[0]!r}") from exc
        except (TypeError, ValueError) as exc:
            if isinstance(exc, FormatError):
                raise
            raise FormatError(f"{where}: {exc}") from exc
        out.setdefault(vid, []).append(tube)
    return out


# -- alignments -------------------------------------------------------------

def alignment_record(align: TrackAlignment, tracks=None) -> dict:
    rec = {
        "schema_version": SCHEMA_VERSION,
        "T": align.n_frames,
        "N": align.n_slots,
        "pair_maps": align.to_lists(),
    }
    if tracks is not None:
        rec["tracks"] = [[int(x) for x in tr] for tr in tracks]
    return rec


def read_alignment(path) -> TrackAlignment:
    try:
        rec = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc.msg})") from exc
    try:
        if rec.get("schema_version") != SCHEMA_VERSION:
            raise FormatError(f"{path}: unsupported schema_version {rec.get('schema_version')!r}")
        return TrackAlignment(int(rec["T"]), int(rec["N"]), tuple(rec["pair_maps"]))
    except KeyError as exc:
        raise FormatError(f"{path}: missing field {exc.args[0]!r}") from exc
    except (TypeError, ValueError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"{path}: {exc}") from exc


# -- scene config -----------------------------------------------------------

_CONFIG_FIELDS = {f.name for f in dataclasses.fields(SceneConfig)}
_DEFAULTS = SceneConfig()


def _convert(key, raw):
    default = getattr(_DEFAULTS, key)
    if isinstance(default, bool):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if isinstance(default, int):
        return int(raw, 10)
    return float(raw)


def parse_config(text: str, source: str = "<config>") -> SceneConfig:
    values, lines = {}, {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line.strip()!r}")
        key, raw = (s.strip() for s in body.split("=", 1))
        if key not in _CONFIG_FIELDS:
            raise ConfigError(f"{source}:{lineno}: unknown field {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: field {key!r} given twice (first on line {lines[key]})")
        try:
            values[key] = _convert(key, raw)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: field {key!r}: {exc}") from exc
        lines[key] = lineno
    try:
        return SceneConfig(**values)
    except ValueError as exc:
        field = str(exc).split(" ", 1)[0]
        where = f"{source}:{lines[field]}" if field in lines else source
        raise ConfigError(f"{where}: field {field!r}: {exc}") from exc


def read_config(path) -> SceneConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"), str(path))


def format_config(cfg: SceneConfig) -> str:
    out = []
    for f in dataclasses.fields(SceneConfig):
        value = getattr(cfg, f.name)
        if isinstance(value, bool):
            value = "true" if value else "false"
        out.append(f"{f.name} = {value}")
    return "\n".join(out) + "\n"
