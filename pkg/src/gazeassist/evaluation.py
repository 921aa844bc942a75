"""Evaluation harness: dwell baseline, cross-validation, stage-gated runs.

The window-level comparison pits the trained network against the classical
fixation-dwell trigger on identical windows. System evaluation drives full
scripted sessions through the live engine and gates success per stage:
recognition, then planning, then execution, each denominator chained to the
previous stage's successes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .features import FeatureConfig, cut_windows, window_starts
from .intentnet import IntentNetClassifier
from .llm import MockLLMClient
from .perception import (
    AlignedGaze,
    GazeSample,
    ObjectTrack,
    SceneGeometry,
    align_gaze_to_frames,
    track_objects,
)
from .session import SessionConfig, SessionEngine, SessionPhase
from .synth import GAZE_DT_US, Dataset
from .world import WorldState

DWELL_MS_DEFAULT = 500.0
MARGIN_PX_DEFAULT = 20.0


def accuracy(predictions: Sequence[int], labels: Sequence[int]) -> float:
    p = np.asarray(predictions).ravel()
    y = np.asarray(labels).ravel()
    if p.size == 0 or p.size != y.size:
        raise ValueError("predictions and labels must be equal-length and non-empty")
    return float(np.mean(p == y))


def fixation_baseline(
    track: ObjectTrack,
    gaze: Sequence[AlignedGaze | None],
    dwell_ms: float = DWELL_MS_DEFAULT,
    margin_px: float = MARGIN_PX_DEFAULT,
    config: FeatureConfig = FeatureConfig(),
    fps: float = 30.0,
) -> list[int]:
    """Dwell-trigger predictions for the same windows cut_windows() keeps.

    A window counts as intent iff it contains a run of consecutive frames,
    long enough to span dwell_ms, whose fresh gaze lies inside the
    margin-expanded box. Carried (blink) frames break the run.
    """
    T = len(track)
    in_box = np.zeros(T, dtype=bool)
    usable = np.zeros(T, dtype=bool)
    for i in range(T):
        frame_idx = track.first_frame + i
        box = track.boxes[i]
        g = gaze[frame_idx] if 0 <= frame_idx < len(gaze) else None
        if box is None or g is None:
            continue
        usable[i] = True
        in_box[i] = g.fresh and box.expand(margin_px).contains(g.gx, g.gy)
    needed = math.ceil(dwell_ms * fps / 1000.0)
    preds: list[int] = []
    for s in window_starts(T, config.sw, config.stride):
        if not usable[s:s + config.sw].all():
            continue  # cut_windows drops this window too
        run = best = 0
        for flag in in_box[s:s + config.sw]:
            run = run + 1 if flag else 0
            best = max(best, run)
        preds.append(1 if best >= needed else 0)
    return preds


@dataclass
class WindowTable:
    """Flattened per-window design matrix with provenance columns."""

    X: np.ndarray
    y: np.ndarray
    baseline: np.ndarray
    subject: np.ndarray
    repetition: np.ndarray
    trial_key: np.ndarray    # "subject/trial"
    object_label: np.ndarray

    def __len__(self) -> int:
        return self.X.shape[0]

    def subset(self, mask: np.ndarray) -> "WindowTable":
        return WindowTable(self.X[mask], self.y[mask], self.baseline[mask],
                           self.subject[mask], self.repetition[mask],
                           self.trial_key[mask], self.object_label[mask])


def assemble_windows(
    dataset: Dataset,
    config: FeatureConfig = FeatureConfig(),
    geometry: SceneGeometry = SceneGeometry(),
    dwell_ms: float = DWELL_MS_DEFAULT,
    margin_px: float = MARGIN_PX_DEFAULT,
) -> WindowTable:
    xs, ys, base, subj, reps, keys, objs = [], [], [], [], [], [], []
    for trial in dataset.trials:
        frame_times = [f.t_us for f in trial.frames]
        gaze = align_gaze_to_frames(trial.gaze, frame_times)
        tracks = track_objects(trial.frames)
        for label in sorted(tracks):
            track = tracks[label]
            wins = cut_windows(track, gaze, config, geometry,
                               marks=trial.marks_for(track.label))
            preds = fixation_baseline(track, gaze, dwell_ms, margin_px, config)
            assert len(wins) == len(preds)
            for w, b in zip(wins, preds):
                xs.append(w.values)
                ys.append(w.label)
                base.append(b)
                subj.append(trial.subject_id)
                reps.append(trial.repetition)
                keys.append(f"{trial.subject_id}/{trial.trial_id}")
                objs.append(track.label)
    return WindowTable(
        X=np.stack(xs), y=np.array(ys, dtype=np.float64),
        baseline=np.array(base, dtype=np.int64),
        subject=np.array(subj), repetition=np.array(reps, dtype=np.int64),
        trial_key=np.array(keys), object_label=np.array(objs))


def _assert_partition(splits: list[tuple[set, set]], universe: set) -> None:
    all_test: set = set()
    for train, test in splits:
        assert not (train & test), "train/test overlap inside a split"
        assert train | test == universe, "split does not cover the universe"
        assert not (all_test & test), "test groups appear in multiple folds"
        all_test |= test
    assert all_test == universe, "union of test folds misses trials"


def five_fold_by_trial(dataset: Dataset) -> list[tuple[set[str], set[str]]]:
    """Hold out one repetition index across subjects per fold."""
    reps = dataset.repetitions
    if len(reps) < 5:
        raise ValueError(f"five-fold needs >= 5 repetitions, found {len(reps)}")
    keys_by_fold: dict[int, set[str]] = {f: set() for f in range(5)}
    for t in dataset.trials:
        keys_by_fold[t.repetition % 5].add(f"{t.subject_id}/{t.trial_id}")
    universe = {f"{t.subject_id}/{t.trial_id}" for t in dataset.trials}
    splits = [(universe - keys_by_fold[f], keys_by_fold[f]) for f in range(5)]
    _assert_partition(splits, universe)
    return splits


def loso(dataset: Dataset) -> list[tuple[set[str], set[str]]]:
    """One split per subject; the held-out subject never appears in training."""
    subjects = dataset.subjects
    if len(subjects) < 2:
        raise ValueError("leave-one-subject-out needs >= 2 subjects")
    universe = {f"{t.subject_id}/{t.trial_id}" for t in dataset.trials}
    splits = []
    for sid in subjects:
        test = {f"{t.subject_id}/{t.trial_id}" for t in dataset.trials
                if t.subject_id == sid}
        splits.append((universe - test, test))
    _assert_partition(splits, universe)
    return splits


@dataclass
class FoldOutcome:
    name: str
    network_accuracy: float
    baseline_accuracy: float
    n_test: int


@dataclass
class CVReport:
    mode: str
    folds: list[FoldOutcome]

    @property
    def network_mean(self) -> float:
        return float(np.mean([f.network_accuracy for f in self.folds]))

    @property
    def network_std(self) -> float:
        return float(np.std([f.network_accuracy for f in self.folds]))

    @property
    def baseline_mean(self) -> float:
        return float(np.mean([f.baseline_accuracy for f in self.folds]))

    @property
    def baseline_std(self) -> float:
        return float(np.std([f.baseline_accuracy for f in self.folds]))

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "folds": [{"name": f.name, "network": f.network_accuracy,
                       "baseline": f.baseline_accuracy, "n_test": f.n_test}
                      for f in self.folds],
            "network": {"mean": self.network_mean, "std": self.network_std},
            "baseline": {"mean": self.baseline_mean, "std": self.baseline_std},
        }

    def render_text(self) -> str:
        lines = [f"{self.mode} cross-validation (window accuracy)",
                 f"{'fold':<14}{'network':>10}{'baseline':>10}{'n':>7}"]
        for f in self.folds:
            lines.append(f"{f.name:<14}{f.network_accuracy:>10.4f}"
                         f"{f.baseline_accuracy:>10.4f}{f.n_test:>7}")
        lines.append(f"{'mean +/- std':<14}"
                     f"{self.network_mean:>10.4f}{self.baseline_mean:>10.4f}")
        lines.append(f"{'':<14}{self.network_std:>10.4f}{self.baseline_std:>10.4f}")
        return "\n".join(lines)


def run_cross_validation(
    dataset: Dataset,
    mode: str = "fivefold",
    estimator_factory: Callable[[], IntentNetClassifier] | None = None,
    table: WindowTable | None = None,
    config: FeatureConfig = FeatureConfig(),
) -> CVReport:
    """Train/evaluate the network per split; the baseline needs no training."""
    if table is None:
        table = assemble_windows(dataset, config)
    if estimator_factory is None:
        estimator_factory = lambda: IntentNetClassifier(epochs=6, batch_size=64, seed=0)
    if mode == "fivefold":
        splits = five_fold_by_trial(dataset)
        names = [f"fold{i}" for i in range(len(splits))]
    elif mode == "loso":
        splits = loso(dataset)
        names = dataset.subjects
    else:
        raise ValueError(f"unknown CV mode {mode!r}")

    folds: list[FoldOutcome] = []
    for name, (train_keys, test_keys) in zip(names, splits):
        train_mask = np.isin(table.trial_key, sorted(train_keys))
        test_mask = np.isin(table.trial_key, sorted(test_keys))
        assert not np.any(train_mask & test_mask)
        est = estimator_factory()
        est.fit(table.X[train_mask], table.y[train_mask])
        net_acc = accuracy(est.predict(table.X[test_mask]), table.y[test_mask])
        base_acc = accuracy(table.baseline[test_mask], table.y[test_mask])
        folds.append(FoldOutcome(name=name, network_accuracy=net_acc,
                                 baseline_accuracy=base_acc,
                                 n_test=int(test_mask.sum())))
    return CVReport(mode=mode, folds=folds)


# ----------------------------------------------------------- system eval

def check_predicate(world: WorldState, predicate: dict) -> bool:
    kind = predicate["kind"]
    obj = world.objects.get(predicate["object"])
    if obj is None:
        return False
    if kind == "contains":
        if obj.contents is None:
            return False
        return (obj.contents.substance == predicate["substance"]
                and abs(obj.contents.amount - predicate["amount"]) <= 1e-9)
    if kind == "at_zone":
        return obj.zone == predicate["zone"]
    if kind == "in_container":
        return obj.zone == predicate["container"]
    if kind == "switch_on":
        return world.switches.get(predicate["object"]) is bool(predicate["value"])
    if kind == "watered":
        return world.plants_watered.get(predicate["object"]) is bool(predicate["value"])
    raise ValueError(f"unknown predicate kind {kind!r}")


@dataclass
class ScriptedSession:
    family: str
    world: WorldState
    observation: list[tuple[str, float]]   # (object label, fixation seconds)
    expected_intention: str
    predicate: dict


@dataclass
class SessionOutcome:
    family: str
    recognition: bool
    plan: bool | None          # None when gated out
    execution: bool | None
    engine: SessionEngine

    @property
    def overall(self) -> bool:
        return bool(self.recognition and self.plan and self.execution)


class ScriptedUser:
    """Reactive gaze source: plays the observation script, then answers
    confirmation questions by dwelling in the agree or reject band."""

    def __init__(self, script: ScriptedSession, geometry: SceneGeometry,
                 seed: int = 0, jitter_px: float = 8.0):
        self.script = script
        self.geometry = geometry
        self.rng = np.random.default_rng(seed)
        self.jitter = jitter_px
        self.t = 0

    def _samples_at(self, point: tuple[float, float], dur_us: int):
        n = max(1, dur_us // GAZE_DT_US)
        for _ in range(n):
            j = self.rng.normal(0.0, self.jitter, 2)
            norm = math.hypot(j[0], j[1])
            if norm > 2.0 * self.jitter:
                j *= 2.0 * self.jitter / norm
            gx = float(np.clip(point[0] + j[0], 0, self.geometry.width_px))
            gy = float(np.clip(point[1] + j[1], 0, self.geometry.height_px))
            yield GazeSample(t_us=self.t, gx=gx, gy=gy, on_screen=True)
            self.t += GAZE_DT_US

    def _object_point(self, label: str) -> tuple[float, float]:
        for lab, box in self.script.world.visible_boxes(self.geometry):
            if lab == label:
                return box.center
        raise ValueError(f"{label!r} not in scripted world")

    def drive(self, engine: SessionEngine, budget_s: float = 90.0) -> None:
        budget_us = int(budget_s * 1e6)
        neutral = (self.geometry.width_px / 2.0, self.geometry.height_px / 2.0)
        agree = (self.geometry.width_px / 2.0, self.geometry.height_px * 0.9)
        reject = (self.geometry.width_px / 2.0, self.geometry.height_px * 0.1)

        def feed(point, dur_us) -> None:
            for s in self._samples_at(point, dur_us):
                engine.submit_gaze(s)
                if engine.terminal:
                    return

        for label, seconds in self.script.observation:
            if engine.terminal or engine.phase is not SessionPhase.OBSERVING:
                break
            feed(self._object_point(label), int(seconds * 1e6))
        while not engine.terminal and self.t < budget_us:
            if engine.phase is SessionPhase.OBSERVING:
                feed(neutral, 200_000)
            elif engine.phase is SessionPhase.CONFIRMING:
                asked = engine.asked_proposal()
                if asked is None:
                    feed(neutral, 50_000)
                elif asked.description == self.script.expected_intention:
                    feed(agree, 150_000)
                else:
                    feed(reject, 150_000)
            else:
                break
        if not engine.terminal:
            engine.abort("user_budget_exhausted", self.t)


def run_scripted_session(
    script: ScriptedSession,
    predictor,
    llm_client=None,
    config: SessionConfig = SessionConfig(),
    geometry: SceneGeometry = SceneGeometry(),
    session_id: str = "scripted",
    log_path: str | None = None,
    seed: int = 0,
) -> SessionOutcome:
    engine = SessionEngine(
        session_id=session_id, world=script.world, predictor=predictor,
        llm_client=llm_client or MockLLMClient(),
        detection_source=None, config=config, log_path=log_path)
    ScriptedUser(script, geometry, seed=seed).drive(engine)
    engine.close()
    events = engine.events
    confirmed = next((e for e in events if e.kind == "confirmed"), None)
    recognition = confirmed is not None and (
        confirmed.payload["description"] == script.expected_intention)
    plan_ok: bool | None = None
    exec_ok: bool | None = None
    if recognition:
        plan_ok = any(e.kind == "plan" for e in events)
        if plan_ok:
            exec_result = next((e for e in events if e.kind == "execution_result"), None)
            exec_ok = bool(
                exec_result is not None and exec_result.payload["ok"]
                and exec_result.payload["attempts"] <= 3
                and check_predicate(engine.world, script.predicate))
    return SessionOutcome(family=script.family, recognition=recognition,
                          plan=plan_ok, execution=exec_ok, engine=engine)


@dataclass
class StageRow:
    family: str
    overall: tuple[int, int]
    recognition: tuple[int, int]
    plan: tuple[int, int]
    execution: tuple[int, int]


@dataclass
class StageReport:
    rows: list[StageRow] = field(default_factory=list)

    @property
    def total(self) -> StageRow:
        def tally(getter):
            s = sum(getter(r)[0] for r in self.rows)
            n = sum(getter(r)[1] for r in self.rows)
            return (s, n)
        return StageRow(family="Total",
                        overall=tally(lambda r: r.overall),
                        recognition=tally(lambda r: r.recognition),
                        plan=tally(lambda r: r.plan),
                        execution=tally(lambda r: r.execution))

    def check_chaining(self) -> None:
        for row in self.rows + [self.total]:
            assert row.plan[1] == row.recognition[0], \
                f"{row.family}: plan denominator must equal recognition successes"
            assert row.execution[1] == row.plan[0], \
                f"{row.family}: execution denominator must equal plan successes"

    def to_json(self) -> dict:
        def fmt(row: StageRow) -> dict:
            return {"overall": list(row.overall), "recognition": list(row.recognition),
                    "plan": list(row.plan), "execution": list(row.execution)}
        return {"rows": {r.family: fmt(r) for r in self.rows},
                "total": fmt(self.total)}

    def render_text(self) -> str:
        def cell(pair):
            return f"{pair[0]}/{pair[1]}"
        lines = [f"{'task family':<22}{'Overall':>10}{'Recognition':>13}"
                 f"{'Plan':>8}{'Execution':>11}"]
        for r in self.rows + [self.total]:
            lines.append(f"{r.family:<22}{cell(r.overall):>10}"
                         f"{cell(r.recognition):>13}{cell(r.plan):>8}"
                         f"{cell(r.execution):>11}")
        return "\n".join(lines)


def run_system_eval(
    scripts: list[ScriptedSession],
    predictor,
    llm_client=None,
    config: SessionConfig = SessionConfig(),
    log_dir: str | None = None,
) -> tuple[StageReport, list[SessionOutcome]]:
    """Run every scripted session and account success per chained stage."""
    outcomes: list[SessionOutcome] = []
    for i, script in enumerate(scripts):
        log_path = None
        if log_dir is not None:
            log_path = f"{log_dir}/{i:02d}-{script.family}.jsonl"
        outcomes.append(run_scripted_session(
            script, predictor, llm_client, config,
            session_id=f"eval-{i:02d}", log_path=log_path, seed=i))
    report = StageReport()
    for family in dict.fromkeys(s.family for s in scripts):
        fam = [o for o in outcomes if o.family == family]
        rec_s = sum(1 for o in fam if o.recognition)
        plan_considered = [o for o in fam if o.recognition]
        plan_s = sum(1 for o in plan_considered if o.plan)
        exec_considered = [o for o in plan_considered if o.plan]
        exec_s = sum(1 for o in exec_considered if o.execution)
        report.rows.append(StageRow(
            family=family,
            overall=(sum(1 for o in fam if o.overall), len(fam)),
            recognition=(rec_s, len(fam)),
            plan=(plan_s, len(plan_considered)),
            execution=(exec_s, len(exec_considered))))
    report.check_chaining()
    return report, outcomes
