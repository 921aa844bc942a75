"""Per-object gaze features and fixed-length window cutting.

Each frame of an object track yields [gx, gy, ratio]: the (optionally
normalized) gaze point plus the quotient of the box half-diagonal and the
center-to-gaze distance. Windows of sw frames, advanced by stride, form the
network input tensor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .perception import AlignedGaze, Box, Detection, ObjectTrack, SceneGeometry

NUM_FEATURES = 3


@dataclass(frozen=True)
class FeatureConfig:
    sw: int = 30
    stride: int = 10
    ratio_cap: float = 10.0
    eps: float = 1e-6
    normalize_gaze: bool = True

    def __post_init__(self) -> None:
        if self.sw < 1 or self.stride < 1:
            raise ValueError("sw and stride must be >= 1")
        if self.ratio_cap <= 0 or self.eps <= 0:
            raise ValueError("ratio_cap and eps must be positive")


@dataclass(frozen=True)
class FeatureWindow:
    """One sw x 3 feature segment for one object, optionally labeled."""

    object_id: str
    start_frame: int
    values: np.ndarray
    label: int | None = None

    def __post_init__(self) -> None:
        if self.values.ndim != 2 or self.values.shape[1] != NUM_FEATURES:
            raise ValueError(f"expected (sw, 3) values, got {self.values.shape}")


@dataclass
class WindowBatch:
    """Batched window tensor (bs, sw, 3) with optional training labels."""

    tensor: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.tensor = np.asarray(self.tensor, dtype=np.float64)
        if self.tensor.ndim != 3 or self.tensor.shape[0] < 1:
            raise ValueError(f"expected (bs, sw, 3) tensor, got {self.tensor.shape}")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.float64).ravel()
            if self.labels.size != self.tensor.shape[0]:
                raise ValueError("labels must match batch size")

    @property
    def bs(self) -> int:
        return self.tensor.shape[0]

    @property
    def sw(self) -> int:
        return self.tensor.shape[1]


def half_diagonal(d: Detection | Box) -> float:
    """Distance from the box center to a vertex."""
    box = d.box if isinstance(d, Detection) else d
    return math.hypot(box.width / 2.0, box.height / 2.0)


def gaze_ratio(
    d: Detection | Box,
    gaze: tuple[float, float],
    ratio_cap: float = 10.0,
    eps: float = 1e-6,
) -> float:
    """Half-diagonal over center-to-gaze distance, clamped to ratio_cap.

    Large values mean the gaze sits deep inside the box relative to the
    object's size; the clamp bounds the singularity at the exact center.
    """
    box = d.box if isinstance(d, Detection) else d
    cx, cy = box.center
    d1 = half_diagonal(box)
    d2 = math.hypot(gaze[0] - cx, gaze[1] - cy)
    return min(d1 / max(d2, eps), ratio_cap)


def window_starts(T: int, sw: int, stride: int) -> list[int]:
    """Arithmetic progression of window offsets: 0, stride, ... while fitting."""
    if T < sw:
        return []
    return list(range(0, (T - sw) // stride * stride + 1, stride))


def feature_frame(
    box: Box,
    gaze: AlignedGaze,
    geometry: SceneGeometry,
    config: FeatureConfig,
) -> tuple[float, float, float]:
    gx, gy = gaze.gx, gaze.gy
    ratio = gaze_ratio(box, (gx, gy), ratio_cap=config.ratio_cap, eps=config.eps)
    if config.normalize_gaze:
        gx /= geometry.width_px
        gy /= geometry.height_px
    return gx, gy, ratio


def label_window(marks: Sequence[bool | None]) -> int:
    """Majority rule: 1 when at least half the window's frames are marked."""
    if any(m is None for m in marks):
        raise ValueError("window has frames without ground-truth marks")
    if len(marks) == 0:
        raise ValueError("empty window")
    return 1 if sum(bool(m) for m in marks) / len(marks) >= 0.5 else 0


def cut_windows(
    track: ObjectTrack,
    gaze: Sequence[AlignedGaze | None],
    config: FeatureConfig = FeatureConfig(),
    geometry: SceneGeometry = SceneGeometry(),
    marks: Sequence[bool] | None = None,
) -> list[FeatureWindow]:
    """Cut one track into labeled feature windows.

    gaze is the full-stream aligned sequence indexed by frame_idx; marks,
    when given, is the per-frame intent mark for this object on the same
    clock. Windows containing an absent gaze frame or an unfilled track gap
    are dropped.
    """
    T = len(track)
    out: list[FeatureWindow] = []
    for s in window_starts(T, config.sw, config.stride):
        rows = np.empty((config.sw, NUM_FEATURES), dtype=np.float64)
        ok = True
        for i in range(config.sw):
            frame_idx = track.first_frame + s + i
            box = track.boxes[s + i]
            g = gaze[frame_idx] if 0 <= frame_idx < len(gaze) else None
            if box is None or g is None:
                ok = False
                break
            rows[i] = feature_frame(box, g, geometry, config)
        if not ok:
            continue
        label: int | None = None
        if marks is not None:
            span = [marks[track.first_frame + s + i] for i in range(config.sw)]
            label = label_window(span)
        out.append(FeatureWindow(object_id=track.object_id,
                                 start_frame=track.first_frame + s,
                                 values=rows, label=label))
    return out


def to_batch(windows: Sequence[FeatureWindow], require_labels: bool = False) -> WindowBatch:
    if not windows:
        raise ValueError("no windows to batch")
    sw = windows[0].values.shape[0]
    if any(w.values.shape[0] != sw for w in windows):
        raise ValueError("all windows in a batch must share sw")
    tensor = np.stack([w.values for w in windows])
    labels = None
    if require_labels or all(w.label is not None for w in windows):
        if any(w.label is None for w in windows):
            raise ValueError("missing labels in batch")
        labels = np.array([w.label for w in windows], dtype=np.float64)
    return WindowBatch(tensor=tensor, labels=labels)


def window_to_json(w: FeatureWindow) -> dict:
    return {
        "object_id": w.object_id,
        "start": w.start_frame,
        "values": [[float(v) for v in row] for row in w.values],
        "label": w.label,
    }


def window_from_json(rec: dict) -> FeatureWindow:
    return FeatureWindow(
        object_id=str(rec["object_id"]),
        start_frame=int(rec["start"]),
        values=np.asarray(rec["values"], dtype=np.float64),
        label=None if rec.get("label") is None else int(rec["label"]),
    )
