"""JSON layouts for correspondences, meshes, colour models and reports."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from ._atomic import atomic_write_text
from .errors import SchemaError

FRAMES = ("input", "canvas")


@dataclass
class CorrespondenceSet:
    """Point matches (x1, y1, x2, y2) and line matches.

    ``lines[i, 0]`` is the segment in the first image and ``lines[i, 1]`` the
    matched segment in the second, each as two (x, y) endpoints.
    """

    points: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))
    lines: np.ndarray = field(default_factory=lambda: np.zeros((0, 2, 2, 2)))
    frame: str = "input"

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 4)
        self.lines = np.asarray(self.lines, dtype=np.float64).reshape(-1, 2, 2, 2)
        if self.frame not in FRAMES:
            raise SchemaError(f"frame must be one of {FRAMES}, got {self.frame!r}")
        if not (np.all(np.isfinite(self.points)) and np.all(np.isfinite(self.lines))):
            raise SchemaError("correspondences contain non-finite coordinates")

    @property
    def src_points(self) -> np.ndarray:
        return self.points[:, 0:2]

    @property
    def dst_points(self) -> np.ndarray:
        return self.points[:, 2:4]

    def to_dict(self) -> dict:
        return {
            "frame": self.frame,
            "points": self.points.tolist(),
            "lines": self.lines.tolist(),
        }


def _number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"{where}: expected a number, got {value!r}")
    if not math.isfinite(value):
        raise SchemaError(f"{where}: non-finite value {value!r}")
    return float(value)


def _xy(value, where: str) -> list[float]:
    if not isinstance(value, list) or len(value) != 2:
        raise SchemaError(f"{where}: expected [x, y]")
    return [_number(v, f"{where}[{k}]") for k, v in enumerate(value)]


def correspondences_from_dict(doc) -> CorrespondenceSet:
    if not isinstance(doc, dict):
        raise SchemaError("correspondence document must be a JSON object")
    unknown = set(doc) - {"frame", "points", "lines"}
    if unknown:
        raise SchemaError(f"unknown field(s): {sorted(unknown)}")
    frame = doc.get("frame", "input")
    if frame not in FRAMES:
        raise SchemaError(f"frame: must be one of {FRAMES}, got {frame!r}")
    points = []
    for i, entry in enumerate(doc.get("points", [])):
        if not isinstance(entry, list) or len(entry) != 4:
            n = len(entry) if isinstance(entry, list) else type(entry).__name__
            raise SchemaError(f"points[{i}]: expected [x1, y1, x2, y2], got {n} entries")
        points.append([_number(v, f"points[{i}][{k}]") for k, v in enumerate(entry)])
    lines = []
    for i, entry in enumerate(doc.get("lines", [])):
        if not isinstance(entry, list) or len(entry) != 2:
            raise SchemaError(f"lines[{i}]: expected [segment_1, segment_2]")
        segs = []
        for s, seg in enumerate(entry):
            if not isinstance(seg, list) or len(seg) != 2:
                raise SchemaError(f"lines[{i}][{s}]: expected two endpoints")
            a = _xy(seg[0], f"lines[{i}][{s}][0]")
            b = _xy(seg[1], f"lines[{i}][{s}][1]")
            if a == b:
                raise SchemaError(f"lines[{i}][{s}]: endpoints coincide")
            segs.append([a, b])
        lines.append(segs)
    return CorrespondenceSet(np.array(points).reshape(-1, 4), np.array(lines).reshape(-1, 2, 2, 2), frame)


def load_correspondences(path) -> CorrespondenceSet:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return correspondences_from_dict(doc)


def save_correspondences(path, corr: CorrespondenceSet) -> None:
    dump_json(path, corr.to_dict())


def dumps(obj) -> str:
    return json.dumps(_plain(obj), indent=2, allow_nan=False) + "\n"


def dump_json(path, obj) -> None:
    atomic_write_text(path, dumps(obj))


def load_json(path):
    with open(path, encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc


def _plain(obj):
    """Convert numpy scalars/arrays nested in ``obj`` into JSON-native types."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj
