"""Gaze and detection stream ingestion, frame alignment and object tracking.

Streams may come from files (line-delimited JSON), from the mock detector
backed by a simulated world, or live via the service API. Everything emits
immutable records on a 30 Hz frame clock.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, NamedTuple, Sequence, TYPE_CHECKING

from .exceptions import StreamFormatError, StreamOrderError

if TYPE_CHECKING:
    from .world import WorldState

FRAME_RATE_HZ = 30.0
FRAME_DT_US = int(round(1_000_000 / FRAME_RATE_HZ))
GAZE_RATE_HZ = 120.0


@dataclass(frozen=True)
class SceneGeometry:
    """Pixel geometry of the scene camera image."""

    width_px: int = 1088
    height_px: int = 1080

    def __post_init__(self) -> None:
        if self.width_px <= 0 or self.height_px <= 0:
            raise ValueError("scene dimensions must be positive")

    def contains(self, x: float, y: float) -> bool:
        return 0 <= x <= self.width_px and 0 <= y <= self.height_px


class Box(NamedTuple):
    """Axis-aligned bounding box in scene pixels."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    @property
    def center(self) -> tuple[float, float]:
        return (self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    def expand(self, margin: float) -> "Box":
        return Box(self.x_min - margin, self.y_min - margin,
                   self.x_max + margin, self.y_max + margin)

    def contains(self, x: float, y: float) -> bool:
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max


def box_iou(a: Box, b: Box) -> float:
    ix = max(0.0, min(a.x_max, b.x_max) - max(a.x_min, b.x_min))
    iy = max(0.0, min(a.y_max, b.y_max) - max(a.y_min, b.y_min))
    inter = ix * iy
    if inter <= 0.0:
        return 0.0
    union = a.width * a.height + b.width * b.height - inter
    return inter / union


@dataclass(frozen=True)
class GazeSample:
    """One raw eye-tracker sample (~120 Hz), scene-image pixel coordinates."""

    t_us: int
    gx: float
    gy: float
    on_screen: bool = True


@dataclass(frozen=True)
class AlignedGaze:
    """Per-frame gaze after alignment to the 30 Hz frame clock.

    fresh is False when the value was carried from an earlier frame because
    the frame had no usable (on-screen) samples, e.g. during a blink.
    """

    gx: float
    gy: float
    fresh: bool = True


@dataclass(frozen=True)
class Detection:
    """One detected object in one frame."""

    object_id: str
    label: str
    box: Box

    def __post_init__(self) -> None:
        if not (self.box.x_min < self.box.x_max and self.box.y_min < self.box.y_max):
            raise ValueError(f"degenerate box for '{self.label}': {self.box}")


@dataclass(frozen=True)
class FrameRecord:
    """One 30 Hz frame: timestamp, aligned gaze (optional) and detections."""

    frame_idx: int
    t_us: int
    gaze: AlignedGaze | None = None
    detections: tuple[Detection, ...] = ()


def align_gaze_to_frames(
    gaze: Sequence[GazeSample],
    frame_times: Sequence[int],
) -> list[AlignedGaze | None]:
    """Align raw gaze samples onto the frame clock.

    Each frame gets the arithmetic mean of the on-screen samples falling in
    [t_f, t_{f+1}); frames with no usable samples carry the previous frame's
    value (fresh=False). Frames before the first usable sample stay None.
    """
    times = [s.t_us for s in gaze]
    if any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
        raise StreamOrderError("gaze samples are not strictly increasing in time")
    ft = list(frame_times)
    if any(t2 <= t1 for t1, t2 in zip(ft, ft[1:])):
        raise StreamOrderError("frame times are not strictly increasing")
    if not ft:
        return []
    if len(ft) > 1:
        deltas = sorted(t2 - t1 for t1, t2 in zip(ft, ft[1:]))
        nominal = deltas[len(deltas) // 2]
    else:
        nominal = FRAME_DT_US

    out: list[AlignedGaze | None] = []
    i = 0
    n = len(gaze)
    prev: AlignedGaze | None = None
    for f, t_f in enumerate(ft):
        t_next = ft[f + 1] if f + 1 < len(ft) else t_f + nominal
        sx = sy = 0.0
        count = 0
        while i < n and gaze[i].t_us < t_next:
            s = gaze[i]
            if s.t_us >= t_f and s.on_screen:
                sx += s.gx
                sy += s.gy
                count += 1
            i += 1
        if count > 0:
            prev = AlignedGaze(sx / count, sy / count, fresh=True)
            out.append(prev)
        elif prev is not None:
            prev = AlignedGaze(prev.gx, prev.gy, fresh=False)
            out.append(prev)
        else:
            out.append(None)
    return out


def mock_detect(world: "WorldState", geometry: SceneGeometry) -> list[Detection]:
    """Ground-truth detections for every visible object of a simulated world."""
    dets = []
    for label, box in world.visible_boxes(geometry):
        dets.append(Detection(object_id=label, label=label, box=box))
    return dets


def _parse_gaze_line(line_no: int, line: str) -> GazeSample:
    try:
        rec = json.loads(line)
        return GazeSample(
            t_us=int(rec["t_us"]),
            gx=float(rec["gx"]),
            gy=float(rec["gy"]),
            on_screen=bool(rec["on_screen"]),
        )
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise StreamFormatError(line_no, f"bad gaze record: {exc}") from exc


def ingest_gaze_stream(source: Iterable[str]) -> list[GazeSample]:
    """Parse a line-delimited gaze stream; rejects disorder and bad lines."""
    samples: list[GazeSample] = []
    last_t: int | None = None
    for line_no, line in enumerate(source, start=1):
        line = line.strip()
        if not line:
            continue
        s = _parse_gaze_line(line_no, line)
        if last_t is not None and s.t_us <= last_t:
            raise StreamFormatError(line_no, "t_us not strictly increasing")
        last_t = s.t_us
        samples.append(s)
    return samples


def _parse_frame_line(line_no: int, line: str) -> FrameRecord:
    try:
        rec = json.loads(line)
        dets = tuple(
            Detection(
                object_id=str(d["id"]),
                label=str(d["label"]),
                box=Box(*(float(v) for v in d["box"])),
            )
            for d in rec.get("detections", [])
        )
        return FrameRecord(frame_idx=int(rec["frame_idx"]), t_us=int(rec["t_us"]),
                           detections=dets)
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise StreamFormatError(line_no, f"bad frame record: {exc}") from exc


def ingest_detection_stream(source: Iterable[str]) -> list[FrameRecord]:
    """Parse a line-delimited detection stream into ordered FrameRecords."""
    frames: list[FrameRecord] = []
    for line_no, line in enumerate(source, start=1):
        line = line.strip()
        if not line:
            continue
        fr = _parse_frame_line(line_no, line)
        if frames and fr.frame_idx != frames[-1].frame_idx + 1:
            raise StreamFormatError(
                line_no,
                f"frame_idx {fr.frame_idx} does not increment {frames[-1].frame_idx} by 1",
            )
        frames.append(fr)
    return frames


@dataclass
class ObjectTrack:
    """Per-frame box history of one tracked object.

    boxes[i] is the box at frame first_frame + i; None marks an unfilled gap
    (gaps of fewer than max_gap_fill frames are filled by holding the last
    box, longer ones stay absent and windows over them are dropped).
    """

    object_id: str
    label: str
    first_frame: int
    boxes: list[Box | None] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.boxes)

    @property
    def last_frame(self) -> int:
        return self.first_frame + len(self.boxes) - 1

    def box_at(self, frame_idx: int) -> Box | None:
        i = frame_idx - self.first_frame
        if 0 <= i < len(self.boxes):
            return self.boxes[i]
        return None


def track_objects(
    frames: Sequence[FrameRecord],
    iou_threshold: float = 0.3,
    max_gap_fill: int = 5,
) -> dict[str, ObjectTrack]:
    """Group detections into per-object tracks keyed by stable id.

    Detections carrying an object_id keep it; id-less detections (live
    sources) are greedily matched to the most recent box of a same-label
    track with IoU >= iou_threshold, else they open a new track.
    """
    observed: dict[str, dict[int, Box]] = {}
    labels: dict[str, str] = {}
    anon_count = 0
    for fr in frames:
        for det in fr.detections:
            oid = det.object_id
            if not oid:
                best_id, best_iou = None, iou_threshold
                for tid, per_frame in observed.items():
                    if labels[tid] != det.label:
                        continue
                    last_idx = max(per_frame)
                    iou = box_iou(per_frame[last_idx], det.box)
                    if iou >= best_iou:
                        best_id, best_iou = tid, iou
                if best_id is None:
                    anon_count += 1
                    best_id = f"{det.label}#{anon_count}"
                oid = best_id
            observed.setdefault(oid, {})[fr.frame_idx] = det.box
            labels[oid] = det.label

    tracks: dict[str, ObjectTrack] = {}
    for oid, per_frame in observed.items():
        first = min(per_frame)
        last = max(per_frame)
        boxes: list[Box | None] = []
        held: Box | None = None
        gap = 0
        for idx in range(first, last + 1):
            box = per_frame.get(idx)
            if box is not None:
                if 0 < gap < max_gap_fill:
                    for j in range(gap):
                        boxes[-1 - j] = held
                gap = 0
                held = box
                boxes.append(box)
            else:
                gap += 1
                boxes.append(None)
        tracks[oid] = ObjectTrack(object_id=oid, label=labels[oid],
                                  first_frame=first, boxes=boxes)
    return tracks


def frame_clock(n_frames: int, t0_us: int = 0, dt_us: int = FRAME_DT_US) -> list[int]:
    """Nominal 30 Hz frame timestamps."""
    return [t0_us + i * dt_us for i in range(n_frames)]


def stream_stats(gaze: Sequence[GazeSample], frames: Sequence[FrameRecord]) -> dict:
    """Summary statistics for the ingest CLI."""
    stats: dict = {
        "gaze_samples": len(gaze),
        "frames": len(frames),
        "objects": sorted({d.object_id for fr in frames for d in fr.detections}),
    }
    if len(gaze) > 1:
        span_s = (gaze[-1].t_us - gaze[0].t_us) / 1e6
        stats["gaze_rate_hz"] = round(len(gaze) / span_s, 2) if span_s > 0 else math.nan
        stats["off_screen_fraction"] = round(
            sum(1 for s in gaze if not s.on_screen) / len(gaze), 4)
    if len(frames) > 1:
        span_s = (frames[-1].t_us - frames[0].t_us) / 1e6
        stats["frame_rate_hz"] = round((len(frames) - 1) / span_s, 2) if span_s > 0 else math.nan
    return stats


def iter_lines(path: str) -> Iterator[str]:
    with open(path, "r", encoding="utf-8") as fh:
        yield from fh
