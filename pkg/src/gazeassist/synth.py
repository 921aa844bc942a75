"""Parametric synthetic gaze data: scripted trials over simulated scenes.

Each trial scripts either intent behavior (clusters of jittered fixations on
target objects, optionally interrupted by blinks) or unconscious scanning
(short glances and wandering rests). Samples come out at ~120 Hz, frames at
30 Hz, and per-frame marks record which object, if any, the gaze is
intentionally fixating. Everything is deterministic per seed.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .perception import (
    FRAME_DT_US,
    Detection,
    FrameRecord,
    GazeSample,
    SceneGeometry,
    mock_detect,
)
from .world import GRID_COLS, GRID_ROWS, USER_ZONE_CELL, Contents, WorldObject, WorldState

GAZE_DT_US = 8333  # ~120 Hz


@dataclass(frozen=True)
class SyntheticProfile:
    fixation_jitter_px: float = 15.0
    intent_fixation_ms: tuple[float, float] = (300.0, 900.0)
    glance_ms: tuple[float, float] = (80.0, 200.0)
    saccade_ms: tuple[float, float] = (50.0, 100.0)
    distractor_glances_per_trial: float = 3.0
    fixations_per_trial: int = 10
    blink_rate_hz: float = 0.8
    blink_ms: tuple[float, float] = (100.0, 250.0)
    subject_sigma_range: tuple[float, float] = (0.8, 1.3)
    subject_duration_range: tuple[float, float] = (0.85, 1.25)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.fixation_jitter_px <= 0:
            raise ValueError("jitter must be positive")
        for lo, hi in (self.intent_fixation_ms, self.glance_ms,
                       self.saccade_ms, self.blink_ms):
            if lo <= 0 or hi < lo:
                raise ValueError("duration ranges must be positive and ordered")


@dataclass(frozen=True)
class Mark:
    frame_idx: int
    intent: bool
    target: str | None


@dataclass
class Trial:
    subject_id: str
    trial_id: str
    repetition: int
    kind: str                     # intent | unconscious
    scenario: str
    targets: list[str]
    world: WorldState
    gaze: list[GazeSample]
    frames: list[FrameRecord]
    marks: list[Mark]

    def marks_for(self, label: str) -> list[bool]:
        return [m.intent and m.target == label for m in self.marks]


@dataclass
class Dataset:
    profile: SyntheticProfile
    n_subjects: int
    trials_per_subject: int
    trials: list[Trial] = field(default_factory=list)

    @property
    def subjects(self) -> list[str]:
        return sorted({t.subject_id for t in self.trials})

    @property
    def repetitions(self) -> list[int]:
        return sorted({t.repetition for t in self.trials})


# task-family scenarios: (name, target labels in gaze order, distractor pool)
SCENARIOS: list[tuple[str, list[str], list[str]]] = [
    ("fetch", ["banana"], ["book", "bottle"]),
    ("put_into", ["banana", "bowl"], ["book"]),
    ("water_plants", ["kettle", "plant"], ["bottle"]),
    ("toggle_switch", ["switch"], ["book", "bottle"]),
    ("pour_water", ["kettle", "cup"], ["bowl"]),
]

_KINDS = {
    "banana": "item", "book": "item", "bottle": "item", "scissors": "item",
    "grapes": "item", "bowl": "container", "box": "container",
    "cup": "container", "kettle": "vessel", "plant": "plant", "switch": "switch",
}

_CONTENTS = {
    "kettle": ("water", 200.0, 300.0),
    "cup": ("water", 0.0, 150.0),
    "bowl": ("water", 0.0, 150.0),
    "plant": ("water", 0.0, 200.0),
}


def scenario_world(scenario: str, rng: np.random.Generator,
                   n_distractors: int = 1) -> tuple[WorldState, list[str]]:
    """Build a world for a task family with randomized object placement."""
    for name, targets, extras in SCENARIOS:
        if name == scenario:
            labels = list(targets) + list(extras[:n_distractors])
            cells = [(r, c) for r in range(GRID_ROWS) for c in range(GRID_COLS)
                     if (r, c) != USER_ZONE_CELL]
            picks = rng.choice(len(cells), size=len(labels), replace=False)
            objects = {}
            for label, ci in zip(labels, picks):
                contents = None
                if label in _CONTENTS:
                    substance, amount, cap = _CONTENTS[label]
                    contents = Contents(substance, amount, cap)
                objects[label] = WorldObject(label=label, kind=_KINDS[label],
                                             cell=cells[int(ci)], contents=contents)
            return WorldState(objects=objects), list(targets)
    raise ValueError(f"unknown scenario {scenario!r}")


@dataclass
class _Segment:
    t0: int
    t1: int
    kind: str                    # hold | move
    p0: tuple[float, float]
    p1: tuple[float, float]
    target: str | None = None    # marked fixation when set
    jitter: float = 0.0

    def position(self, t_us: int) -> tuple[float, float]:
        if self.kind == "hold" or self.t1 == self.t0:
            return self.p0
        a = (t_us - self.t0) / (self.t1 - self.t0)
        return (self.p0[0] + a * (self.p1[0] - self.p0[0]),
                self.p0[1] + a * (self.p1[1] - self.p0[1]))


class _Timeline:
    """Piecewise gaze script: holds and linear saccades plus blink spans."""

    def __init__(self, start_point: tuple[float, float]):
        self.segments: list[_Segment] = []
        self.blinks: list[tuple[int, int]] = []
        self.t = 0
        self.point = start_point

    def hold(self, dur_us: int, point: tuple[float, float], target: str | None,
             jitter: float) -> tuple[int, int]:
        seg = _Segment(self.t, self.t + dur_us, "hold", point, point, target, jitter)
        self.segments.append(seg)
        self.t += dur_us
        self.point = point
        return seg.t0, seg.t1

    def saccade(self, dur_us: int, to_point: tuple[float, float]) -> None:
        self.segments.append(_Segment(self.t, self.t + dur_us, "move",
                                      self.point, to_point))
        self.t += dur_us
        self.point = to_point

    def blink(self, t0: int, t1: int) -> None:
        self.blinks.append((t0, t1))

    def in_blink(self, t_us: int) -> bool:
        return any(b0 <= t_us < b1 for b0, b1 in self.blinks)

    def render(self, rng: np.random.Generator,
               geometry: SceneGeometry) -> tuple[list[GazeSample], list[tuple[int, int, str]]]:
        """Sample at ~120 Hz; returns (samples, marked fixation spans)."""
        samples: list[GazeSample] = []
        n = self.t // GAZE_DT_US
        seg_i = 0
        for i in range(n):
            t = i * GAZE_DT_US
            while seg_i + 1 < len(self.segments) and t >= self.segments[seg_i].t1:
                seg_i += 1
            seg = self.segments[seg_i]
            if self.in_blink(t):
                samples.append(GazeSample(t_us=t, gx=0.0, gy=0.0, on_screen=False))
                continue
            x, y = seg.position(t)
            if seg.jitter > 0.0:
                # norm-clipped so marked gaze stays within 3 sigma of the center
                j = rng.normal(0.0, seg.jitter, 2)
                norm = math.hypot(j[0], j[1])
                limit = 2.0 * seg.jitter
                if norm > limit:
                    j *= limit / norm
                x, y = x + float(j[0]), y + float(j[1])
            x = float(np.clip(x, 0.0, geometry.width_px))
            y = float(np.clip(y, 0.0, geometry.height_px))
            samples.append(GazeSample(t_us=t, gx=x, gy=y, on_screen=True))
        spans = [(s.t0, s.t1, s.target) for s in self.segments if s.target is not None]
        return samples, spans


def _empty_point(rng: np.random.Generator, world: WorldState,
                 geometry: SceneGeometry) -> tuple[float, float]:
    used = {o.cell for o in world.objects.values() if o.cell is not None}
    free = [(r, c) for r in range(GRID_ROWS) for c in range(GRID_COLS)
            if (r, c) not in used]
    r, c = free[int(rng.integers(0, len(free)))]
    cw = geometry.width_px / GRID_COLS
    ch = geometry.height_px / GRID_ROWS
    return ((c + 0.5) * cw + float(rng.uniform(-20, 20)),
            (r + 0.5) * ch + float(rng.uniform(-20, 20)))


def _uniform_us(rng: np.random.Generator, rng_ms: tuple[float, float],
                mult: float = 1.0) -> int:
    return int(rng.uniform(rng_ms[0], rng_ms[1]) * 1000.0 * mult)


@dataclass(frozen=True)
class SubjectTraits:
    sigma_mult: float
    duration_mult: float


def subject_traits(profile: SyntheticProfile, rng: np.random.Generator) -> SubjectTraits:
    return SubjectTraits(
        sigma_mult=float(rng.uniform(*profile.subject_sigma_range)),
        duration_mult=float(rng.uniform(*profile.subject_duration_range)),
    )


def _object_center(world: WorldState, label: str,
                   geometry: SceneGeometry) -> tuple[float, float]:
    for lab, box in world.visible_boxes(geometry):
        if lab == label:
            return box.center
    raise ValueError(f"object {label!r} not visible")


def _build_frames(world: WorldState, n_frames: int,
                  geometry: SceneGeometry) -> list[FrameRecord]:
    dets = tuple(mock_detect(world, geometry))
    return [FrameRecord(frame_idx=i, t_us=i * FRAME_DT_US, detections=dets)
            for i in range(n_frames)]


def _marks_from_spans(spans: list[tuple[int, int, str]], n_frames: int) -> list[Mark]:
    marks: list[Mark] = []
    for f in range(n_frames):
        t0, t1 = f * FRAME_DT_US, (f + 1) * FRAME_DT_US
        hit = None
        for s0, s1, target in spans:
            # only frames fully inside the fixation are marked
            if s0 <= t0 and t1 <= s1:
                hit = target
                break
        marks.append(Mark(frame_idx=f, intent=hit is not None, target=hit))
    return marks


def build_intent_trial(
    subject_id: str,
    trial_id: str,
    repetition: int,
    scenario: str,
    profile: SyntheticProfile,
    traits: SubjectTraits,
    rng: np.random.Generator,
    geometry: SceneGeometry = SceneGeometry(),
) -> Trial:
    world, targets = scenario_world(scenario, rng)
    sigma = profile.fixation_jitter_px * traits.sigma_mult
    tl = _Timeline(_empty_point(rng, world, geometry))
    tl.hold(_uniform_us(rng, (400, 800)), tl.point, None, sigma)

    n_fix = profile.fixations_per_trial
    fixation_plan = [targets[i % len(targets)] for i in range(n_fix)]
    fixation_plan.sort(key=lambda lab: targets.index(lab))  # cluster per target

    n_glances = int(round(profile.distractor_glances_per_trial))
    distractors = [lab for lab in world.objects if lab not in targets]
    glance_slots = set(rng.choice(n_fix, size=min(n_glances, n_fix), replace=False)
                       ) if distractors and n_glances else set()

    for i, label in enumerate(fixation_plan):
        center = _object_center(world, label, geometry)
        offset = rng.normal(0.0, sigma / 2.0, 2)
        norm = math.hypot(offset[0], offset[1])
        if norm > sigma:
            offset *= sigma / norm
        point = (center[0] + float(offset[0]), center[1] + float(offset[1]))
        tl.saccade(_uniform_us(rng, profile.saccade_ms), point)
        dur = _uniform_us(rng, profile.intent_fixation_ms, traits.duration_mult)
        t0, t1 = tl.hold(dur, point, label, sigma)
        if dur >= 400_000 and rng.random() < min(0.85, profile.blink_rate_hz * dur / 1e6):
            blen = _uniform_us(rng, profile.blink_ms)
            earliest = t0 + 120_000
            latest = t1 - blen - 80_000
            if latest > earliest:
                bs = int(rng.integers(earliest, latest))
                tl.blink(bs, bs + blen)
        # wander to an empty spot between fixations
        wander = _empty_point(rng, world, geometry)
        tl.saccade(_uniform_us(rng, profile.saccade_ms), wander)
        tl.hold(_uniform_us(rng, (120, 300)), wander, None, sigma)
        if i in glance_slots:
            dlabel = distractors[int(rng.integers(0, len(distractors)))]
            dpoint = _object_center(world, dlabel, geometry)
            tl.saccade(_uniform_us(rng, profile.saccade_ms), dpoint)
            tl.hold(_uniform_us(rng, profile.glance_ms, traits.duration_mult),
                    dpoint, None, sigma)
            tl.saccade(_uniform_us(rng, profile.saccade_ms), wander)
            tl.hold(_uniform_us(rng, (100, 250)), wander, None, sigma)
    tl.hold(_uniform_us(rng, (400, 800)), tl.point, None, sigma)

    samples, spans = tl.render(rng, geometry)
    n_frames = tl.t // FRAME_DT_US
    return Trial(subject_id=subject_id, trial_id=trial_id, repetition=repetition,
                 kind="intent", scenario=scenario, targets=targets, world=world,
                 gaze=samples, frames=_build_frames(world, n_frames, geometry),
                 marks=_marks_from_spans(spans, n_frames))


def build_unconscious_trial(
    subject_id: str,
    trial_id: str,
    repetition: int,
    scenario: str,
    profile: SyntheticProfile,
    traits: SubjectTraits,
    rng: np.random.Generator,
    geometry: SceneGeometry = SceneGeometry(),
    duration_s: float = 6.5,
) -> Trial:
    world, targets = scenario_world(scenario, rng)
    sigma = profile.fixation_jitter_px * traits.sigma_mult
    tl = _Timeline(_empty_point(rng, world, geometry))
    labels = sorted(world.objects)
    while tl.t < int(duration_s * 1e6):
        if rng.random() < 0.45:
            label = labels[int(rng.integers(0, len(labels)))]
            point = _object_center(world, label, geometry)
            tl.saccade(_uniform_us(rng, profile.saccade_ms), point)
            tl.hold(_uniform_us(rng, profile.glance_ms, traits.duration_mult),
                    point, None, sigma)
        else:
            point = _empty_point(rng, world, geometry)
            tl.saccade(_uniform_us(rng, profile.saccade_ms), point)
            tl.hold(_uniform_us(rng, (200, 600)), point, None, sigma)
    samples, spans = tl.render(rng, geometry)
    n_frames = tl.t // FRAME_DT_US
    return Trial(subject_id=subject_id, trial_id=trial_id, repetition=repetition,
                 kind="unconscious", scenario=scenario, targets=[], world=world,
                 gaze=samples, frames=_build_frames(world, n_frames, geometry),
                 marks=_marks_from_spans(spans, n_frames))


def generate_dataset(
    profile: SyntheticProfile = SyntheticProfile(),
    n_subjects: int = 8,
    trials_per_subject: int = 10,
    geometry: SceneGeometry = SceneGeometry(),
) -> Dataset:
    """Scripted trials for every subject: per repetition one intent trial
    (task families rotate) and one unconscious-scanning trial."""
    if trials_per_subject % 2 != 0:
        raise ValueError("trials_per_subject must be even (intent/unconscious pairs)")
    rng = np.random.default_rng(profile.seed)
    dataset = Dataset(profile=profile, n_subjects=n_subjects,
                      trials_per_subject=trials_per_subject)
    n_reps = trials_per_subject // 2
    for si in range(n_subjects):
        sid = f"s{si:02d}"
        traits = subject_traits(profile, rng)
        for rep in range(n_reps):
            scenario = SCENARIOS[rep % len(SCENARIOS)][0]
            dataset.trials.append(build_intent_trial(
                sid, f"t{2 * rep:02d}", rep, scenario, profile, traits, rng, geometry))
            dataset.trials.append(build_unconscious_trial(
                sid, f"t{2 * rep + 1:02d}", rep, scenario, profile, traits, rng, geometry))
    return dataset


# ---------------------------------------------------------------- disk layout

def _trial_dir(root: str, trial: Trial) -> str:
    return os.path.join(root, "subjects", trial.subject_id, "trials", trial.trial_id)


def save_dataset(root: str, dataset: Dataset) -> None:
    os.makedirs(root, exist_ok=True)
    meta = {
        "profile": asdict(dataset.profile),
        "n_subjects": dataset.n_subjects,
        "trials_per_subject": dataset.trials_per_subject,
    }
    with open(os.path.join(root, "meta.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2)
    for trial in dataset.trials:
        tdir = _trial_dir(root, trial)
        os.makedirs(tdir, exist_ok=True)
        with open(os.path.join(tdir, "gaze.jsonl"), "w", encoding="utf-8") as fh:
            for s in trial.gaze:
                fh.write(json.dumps({"t_us": s.t_us, "gx": s.gx, "gy": s.gy,
                                     "on_screen": s.on_screen}) + "\n")
        with open(os.path.join(tdir, "frames.jsonl"), "w", encoding="utf-8") as fh:
            for fr in trial.frames:
                fh.write(json.dumps({
                    "frame_idx": fr.frame_idx, "t_us": fr.t_us,
                    "detections": [{"id": d.object_id, "label": d.label,
                                    "box": list(d.box)} for d in fr.detections],
                }) + "\n")
        with open(os.path.join(tdir, "marks.jsonl"), "w", encoding="utf-8") as fh:
            for m in trial.marks:
                fh.write(json.dumps({"frame_idx": m.frame_idx, "intent": m.intent,
                                     "target": m.target}) + "\n")
        with open(os.path.join(tdir, "meta.json"), "w", encoding="utf-8") as fh:
            json.dump({"subject_id": trial.subject_id, "trial_id": trial.trial_id,
                       "repetition": trial.repetition, "kind": trial.kind,
                       "scenario": trial.scenario, "targets": trial.targets,
                       "world": trial.world.to_dict()}, fh, indent=2)


def load_dataset(root: str) -> Dataset:
    from .perception import ingest_detection_stream, ingest_gaze_stream, iter_lines

    with open(os.path.join(root, "meta.json"), "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    prof = meta["profile"]
    for key in ("intent_fixation_ms", "glance_ms", "saccade_ms", "blink_ms",
                "subject_sigma_range", "subject_duration_range"):
        prof[key] = tuple(prof[key])
    dataset = Dataset(profile=SyntheticProfile(**prof),
                      n_subjects=meta["n_subjects"],
                      trials_per_subject=meta["trials_per_subject"])
    subjects_root = os.path.join(root, "subjects")
    for sid in sorted(os.listdir(subjects_root)):
        trials_root = os.path.join(subjects_root, sid, "trials")
        for tid in sorted(os.listdir(trials_root)):
            tdir = os.path.join(trials_root, tid)
            with open(os.path.join(tdir, "meta.json"), "r", encoding="utf-8") as fh:
                tmeta = json.load(fh)
            gaze = ingest_gaze_stream(iter_lines(os.path.join(tdir, "gaze.jsonl")))
            frames = ingest_detection_stream(iter_lines(os.path.join(tdir, "frames.jsonl")))
            marks = []
            with open(os.path.join(tdir, "marks.jsonl"), "r", encoding="utf-8") as fh:
                for line in fh:
                    rec = json.loads(line)
                    marks.append(Mark(frame_idx=rec["frame_idx"], intent=rec["intent"],
                                      target=rec["target"]))
            dataset.trials.append(Trial(
                subject_id=tmeta["subject_id"], trial_id=tmeta["trial_id"],
                repetition=tmeta["repetition"], kind=tmeta["kind"],
                scenario=tmeta["scenario"], targets=tmeta["targets"],
                world=WorldState.from_dict(tmeta["world"]),
                gaze=gaze, frames=frames, marks=marks))
    return dataset
