"""Live session orchestration with an append-only, replayable event log.

A session consumes one ordered gaze stream. Frames assemble on a 30 Hz
clock; per-object windows are scored as they fill; objects that clear the
debounce enter the gazed sequence; a quiet period triggers intention
inference; confirmation runs on the raw samples; a confirmed intention is
planned and executed against the session's world. Every stage outcome is an
event, so a recorded log replays to the exact phase trajectory.
"""

from __future__ import annotations

import enum
import json
import os
from dataclasses import dataclass, field
from typing import Callable, Iterable, Protocol

import numpy as np

from .confirmation import (
    ConfirmationState,
    Phase as ConfirmPhase,
    RegionLayout,
    start_state,
    step as confirm_step,
)
from .exceptions import InferenceError, PlanningError, ReplayError
from .features import NUM_FEATURES, FeatureConfig, feature_frame
from .intentnet.net import Prediction
from .llm import GazedObjectSequence, IntentProposal, LLMClient, build_prompt, infer_intentions
from .perception import (
    FRAME_DT_US,
    AlignedGaze,
    Detection,
    GazeSample,
    SceneGeometry,
    mock_detect,
)
from .planner import ExecutionPolicy, execute, plan
from .world import RESERVED_TARGETS, WorldState

EVENT_VERSION = "event-v1"


class SessionPhase(enum.Enum):
    OBSERVING = "Observing"
    INFERRING = "Inferring"
    CONFIRMING = "Confirming"
    PLANNING = "Planning"
    EXECUTING = "Executing"
    DONE = "Done"
    ABORTED = "Aborted"


TERMINAL_PHASES = (SessionPhase.DONE, SessionPhase.ABORTED)


@dataclass(frozen=True)
class SessionEvent:
    seq: int
    t_us: int
    kind: str
    payload: dict

    def to_json_line(self) -> str:
        return json.dumps({"v": EVENT_VERSION, "seq": self.seq, "t_us": self.t_us,
                           "kind": self.kind, "payload": self.payload})

    @staticmethod
    def from_json_line(line: str, expect_seq: int) -> "SessionEvent":
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ReplayError(expect_seq, f"bad JSON: {exc}") from exc
        if rec.get("v") != EVENT_VERSION:
            raise ReplayError(expect_seq, f"unknown event version {rec.get('v')!r}")
        if rec.get("seq") != expect_seq:
            raise ReplayError(expect_seq, f"seq gap: got {rec.get('seq')}")
        return SessionEvent(seq=rec["seq"], t_us=rec["t_us"], kind=rec["kind"],
                            payload=rec.get("payload", {}))


@dataclass(frozen=True)
class SessionConfig:
    feature: FeatureConfig = FeatureConfig()
    geometry: SceneGeometry = SceneGeometry()
    debounce_windows: int = 2
    quiet_us: int = 1_500_000
    dwell_us: int = 800_000
    confirm_deadline_us: int = 10_000_000
    execution: ExecutionPolicy = field(default_factory=ExecutionPolicy)


class WindowPredictor(Protocol):
    def predict_window(self, values: np.ndarray) -> Prediction: ...


DetectionSource = Callable[[int, int], "list[Detection] | None"]


def world_detection_source(world: WorldState, geometry: SceneGeometry) -> DetectionSource:
    def source(frame_idx: int, t_us: int) -> list[Detection]:
        return mock_detect(world, geometry)
    return source


def frame_file_detection_source(frames) -> DetectionSource:
    records = list(frames)

    def source(frame_idx: int, t_us: int):
        if frame_idx >= len(records):
            return None
        return list(records[frame_idx].detections)
    return source


@dataclass
class _ObjectBuffer:
    rows: list = field(default_factory=list)       # feature rows or None
    consecutive_pos: int = 0
    run_start_t: int | None = None


class SessionEngine:
    """One gaze-driven session over an immutable-world snapshot."""

    def __init__(
        self,
        session_id: str,
        world: WorldState,
        predictor: WindowPredictor,
        llm_client: LLMClient,
        detection_source: DetectionSource | None = None,
        plan_client: LLMClient | None = None,
        config: SessionConfig = SessionConfig(),
        log_path: str | None = None,
    ):
        self.session_id = session_id
        self.world = world.snapshot()
        self.predictor = predictor
        self.llm_client = llm_client
        self.plan_client = plan_client
        self.config = config
        self.detection_source = detection_source or world_detection_source(
            self.world, config.geometry)
        self.layout = RegionLayout(height=float(config.geometry.height_px))
        self.phase = SessionPhase.OBSERVING
        self.events: list[SessionEvent] = []
        self._seq = 0
        self._log_fh = open(log_path, "a", encoding="utf-8") if log_path else None

        self._t0: int | None = None
        self._frame_idx = 0
        self._frame_samples: list[GazeSample] = []
        self._last_aligned: AlignedGaze | None = None
        self._buffers: dict[str, _ObjectBuffer] = {}
        self._accumulated: dict[str, int] = {}
        self._last_positive_t: int | None = None
        self._proposals: list[IntentProposal] = []
        self._proposal_idx = 0
        self._confirm: ConfirmationState | None = None
        self._emit(0, "phase", {"phase": self.phase.value})
        self._emit(0, "world", {"world": self.world.to_dict()})

    # ------------------------------------------------------------- events

    def _emit(self, t_us: int, kind: str, payload: dict) -> SessionEvent:
        ev = SessionEvent(seq=self._seq, t_us=t_us, kind=kind, payload=payload)
        self._seq += 1
        self.events.append(ev)
        if self._log_fh is not None:
            self._log_fh.write(ev.to_json_line() + "\n")
            self._log_fh.flush()
        return ev

    def _set_phase(self, phase: SessionPhase, t_us: int) -> None:
        self.phase = phase
        self._emit(t_us, "phase", {"phase": phase.value})

    def close(self) -> None:
        if self._log_fh is not None:
            self._log_fh.close()
            self._log_fh = None

    @property
    def terminal(self) -> bool:
        return self.phase in TERMINAL_PHASES

    def asked_proposal(self) -> IntentProposal | None:
        """The proposal currently being confirmed, if any."""
        if (self.phase is SessionPhase.CONFIRMING
                and self._proposal_idx < len(self._proposals)):
            return self._proposals[self._proposal_idx]
        return None

    # -------------------------------------------------------------- input

    def submit_gaze(self, sample: GazeSample) -> list[SessionEvent]:
        """Feed one raw gaze sample; returns the events it produced."""
        if self.terminal:
            return []
        before = len(self.events)
        if self.phase is SessionPhase.CONFIRMING:
            self._confirm_input(sample)
        else:
            self._observe_input(sample)
        return self.events[before:]

    def abort(self, cause: str, t_us: int = 0) -> None:
        if self.terminal:
            return
        self._emit(t_us, "abort", {"cause": cause})
        self._set_phase(SessionPhase.ABORTED, t_us)
        self.close()

    # -------------------------------------------------- frame assembly path

    def _observe_input(self, sample: GazeSample) -> None:
        if self._t0 is None:
            self._t0 = sample.t_us
        boundary = self._t0 + (self._frame_idx + 1) * FRAME_DT_US
        while sample.t_us >= boundary and not self.terminal:
            self._finish_frame(boundary)
            boundary = self._t0 + (self._frame_idx + 1) * FRAME_DT_US
        if not self.terminal:
            self._frame_samples.append(sample)

    def _finish_frame(self, boundary_us: int) -> None:
        frame_t = boundary_us - FRAME_DT_US
        usable = [s for s in self._frame_samples if s.on_screen]
        if usable:
            gx = sum(s.gx for s in usable) / len(usable)
            gy = sum(s.gy for s in usable) / len(usable)
            self._last_aligned = AlignedGaze(gx, gy, fresh=True)
        elif self._last_aligned is not None:
            self._last_aligned = AlignedGaze(self._last_aligned.gx,
                                             self._last_aligned.gy, fresh=False)
        self._frame_samples = []
        detections = self.detection_source(self._frame_idx, frame_t)
        if detections is None:
            self.abort("stream_end", frame_t)
            return
        self._score_frame(frame_t, detections)
        self._frame_idx += 1
        if self.phase is SessionPhase.OBSERVING:
            self._maybe_infer(frame_t)

    def _score_frame(self, frame_t: int, detections: list[Detection]) -> None:
        cfg = self.config.feature
        seen = set()
        for det in detections:
            seen.add(det.object_id)
            buf = self._buffers.setdefault(det.object_id, _ObjectBuffer())
            if self._last_aligned is None:
                buf.rows.append(None)
            else:
                buf.rows.append(feature_frame(det.box, self._last_aligned,
                                              self.config.geometry, cfg))
        for oid, buf in self._buffers.items():
            if oid not in seen:
                buf.rows.append(None)
        if self.phase is not SessionPhase.OBSERVING:
            return
        if (self._frame_idx + 1) % cfg.stride != 0:
            return
        for det in detections:
            buf = self._buffers[det.object_id]
            if len(buf.rows) < cfg.sw:
                continue
            tail = buf.rows[-cfg.sw:]
            if any(r is None for r in tail):
                continue
            values = np.asarray(tail, dtype=np.float64).reshape(cfg.sw, NUM_FEATURES)
            pred = self.predictor.predict_window(values)
            start_frame = self._frame_idx - cfg.sw + 1
            self._emit(frame_t, "window_scored", {
                "object": det.label, "start_frame": start_frame,
                "y_hat": round(float(pred.y_hat), 6), "decided": pred.decided})
            if pred.decided:
                if buf.consecutive_pos == 0:
                    buf.run_start_t = frame_t
                buf.consecutive_pos += 1
                self._last_positive_t = frame_t
                if (buf.consecutive_pos >= self.config.debounce_windows
                        and det.label not in self._accumulated):
                    self._accumulated[det.label] = buf.run_start_t
                    self._emit(frame_t, "object_accumulated", {
                        "object": det.label,
                        "first_positive_t_us": buf.run_start_t})
            else:
                buf.consecutive_pos = 0
                buf.run_start_t = None

    # ------------------------------------------------------ inference path

    def _maybe_infer(self, frame_t: int) -> None:
        if not self._accumulated or self._last_positive_t is None:
            return
        if frame_t - self._last_positive_t < self.config.quiet_us:
            return
        self._set_phase(SessionPhase.INFERRING, frame_t)
        seq = GazedObjectSequence.from_events(list(self._accumulated.items()))
        prompt = build_prompt(seq)
        try:
            proposals = infer_intentions(prompt, self.llm_client)
        except InferenceError as exc:
            self.abort(f"inference_error: {exc}", frame_t)
            return
        known = set(self.world.objects) | set(RESERVED_TARGETS)
        kept: list[IntentProposal] = []
        for p in proposals:
            unknown = [w for w in _candidate_labels(p.description) if w not in known]
            if unknown:
                self._emit(frame_t, "proposal_filtered", {
                    "description": p.description, "unknown_objects": unknown})
            else:
                kept.append(p)
        kept = [IntentProposal(rank=i, description=p.description,
                               source_objects=p.source_objects)
                for i, p in enumerate(kept, start=1)]
        if not kept:
            self._emit(frame_t, "all_rejected", {"ranks": [], "reason": "all_filtered"})
            self._reset_observation(frame_t)
            return
        self._proposals = kept
        self._proposal_idx = 0
        self._emit(frame_t, "proposals", {
            "proposals": [{"rank": p.rank, "description": p.description,
                           "source_objects": list(p.source_objects)} for p in kept]})
        self._set_phase(SessionPhase.CONFIRMING, frame_t)
        self._confirm = None
        self._frame_samples = []

    def _reset_observation(self, t_us: int) -> None:
        self._buffers.clear()
        self._accumulated.clear()
        self._last_positive_t = None
        self._proposals = []
        self._confirm = None
        # restart the frame clock at the next sample: the confirmation gap
        # must not be backfilled with carried gaze
        self._t0 = None
        self._frame_idx = 0
        self._frame_samples = []
        self._last_aligned = None
        self._set_phase(SessionPhase.OBSERVING, t_us)

    # ---------------------------------------------------- confirmation path

    def _emit_confirm(self, t_us: int) -> None:
        state = self._confirm
        proposal = self._proposals[self._proposal_idx]
        self._emit(t_us, "confirmation_phase", {
            "phase": state.phase.value, "rank": proposal.rank,
            "question": proposal.question(),
            "dwell_started_us": state.dwell_started_us,
            "dwell_us": state.dwell_us, "deadline_us": state.deadline_us})

    def _confirm_input(self, sample: GazeSample) -> None:
        if self._confirm is None:
            self._confirm = start_state(
                self._proposals[self._proposal_idx].rank, sample.t_us,
                dwell_us=self.config.dwell_us,
                deadline_us=self.config.confirm_deadline_us)
            self._emit_confirm(sample.t_us)
        prev_phase = self._confirm.phase
        self._confirm = confirm_step(self._confirm, sample, self.layout)
        if self._confirm.phase is not prev_phase:
            self._emit_confirm(sample.t_us)
        if self._confirm.phase is ConfirmPhase.CONFIRMED:
            proposal = self._proposals[self._proposal_idx]
            self._emit(sample.t_us, "confirmed", {
                "rank": proposal.rank, "description": proposal.description})
            self._plan_and_execute(proposal, sample.t_us)
        elif self._confirm.phase in (ConfirmPhase.REJECTED, ConfirmPhase.TIMED_OUT):
            self._proposal_idx += 1
            if self._proposal_idx >= len(self._proposals):
                self._emit(sample.t_us, "all_rejected",
                           {"ranks": [p.rank for p in self._proposals]})
                self._reset_observation(sample.t_us)
            else:
                self._confirm = None

    # ------------------------------------------------ planning / execution

    def _plan_and_execute(self, proposal: IntentProposal, t_us: int) -> None:
        self._set_phase(SessionPhase.PLANNING, t_us)
        try:
            the_plan = plan(proposal.description, self.world, self.plan_client)
        except PlanningError as exc:
            self._emit(t_us, "plan_invalid", {"violations": exc.violations,
                                              "error": str(exc)})
            self.abort("planning_error", t_us)
            return
        self._emit(t_us, "plan", {"steps": the_plan.to_json(),
                                  "source": the_plan.source,
                                  "intention": the_plan.intention})
        self._set_phase(SessionPhase.EXECUTING, t_us)
        result = execute(the_plan, self.world, self.config.execution)
        for outcome in result.outcomes:
            self._emit(t_us, "step_result", outcome.to_json())
        self._emit(t_us, "execution_result", {
            "ok": result.ok, "attempts": result.attempts,
            "totals_before": result.totals_before,
            "totals_after": result.totals_after})
        self.world = result.world
        self._emit(t_us, "world", {"world": self.world.to_dict()})
        if result.ok:
            self._set_phase(SessionPhase.DONE, t_us)
            self.close()
        else:
            self.abort("execution_failed", t_us)


def _candidate_labels(description: str) -> list[str]:
    """Nouns following 'the' in an intention phrase, as world-label candidates."""
    words = description.replace(",", " ").split()
    out = []
    for i, w in enumerate(words[:-1]):
        if w == "the":
            out.append(words[i + 1].strip(".?!"))
    return out


@dataclass
class SessionRuntime:
    world: WorldState
    predictor: WindowPredictor
    llm_client: LLMClient
    plan_client: LLMClient | None = None


def run_session(
    gaze_source: Iterable[GazeSample],
    detection_source: DetectionSource,
    runtime: SessionRuntime,
    config: SessionConfig = SessionConfig(),
    session_id: str = "local",
    log_path: str | None = None,
) -> SessionEngine:
    """Drive a full session from pre-recorded sources; returns the engine."""
    engine = SessionEngine(session_id=session_id, world=runtime.world,
                           predictor=runtime.predictor, llm_client=runtime.llm_client,
                           detection_source=detection_source,
                           plan_client=runtime.plan_client, config=config,
                           log_path=log_path)
    last_t = 0
    for sample in gaze_source:
        last_t = sample.t_us
        engine.submit_gaze(sample)
        if engine.terminal:
            break
    if not engine.terminal:
        engine.abort("stream_end", last_t)
    engine.close()
    return engine


# ------------------------------------------------------------------ replay

@dataclass
class ReplayResult:
    phases: list[str]
    confirmed: dict | None
    plan_steps: list[dict] | None
    execution: dict | None
    final_world: dict | None
    events: list[SessionEvent]

    @property
    def terminal_phase(self) -> str:
        return self.phases[-1]


def read_event_log(lines: Iterable[str]) -> list[SessionEvent]:
    events = []
    for i, line in enumerate(lines):
        line = line.strip()
        if not line:
            continue
        events.append(SessionEvent.from_json_line(line, expect_seq=i))
    return events


def replay(lines: Iterable[str]) -> ReplayResult:
    """Reconstruct the phase trajectory and decisions from a recorded log.

    Pure log reading: no model, no clients, no world are touched. Raises
    ReplayError naming the offending seq for corrupt or truncated logs.
    """
    events = read_event_log(lines)
    if not events:
        raise ReplayError(0, "empty log")
    phases = [e.payload["phase"] for e in events if e.kind == "phase"]
    if not phases or phases[-1] not in (SessionPhase.DONE.value,
                                        SessionPhase.ABORTED.value):
        raise ReplayError(events[-1].seq + 1, "log truncated before a terminal phase")
    confirmed = next((e.payload for e in events if e.kind == "confirmed"), None)
    plan_ev = next((e.payload for e in events if e.kind == "plan"), None)
    execution = next((e.payload for e in events if e.kind == "execution_result"), None)
    world_evs = [e.payload["world"] for e in events if e.kind == "world"]
    return ReplayResult(
        phases=phases,
        confirmed=confirmed,
        plan_steps=plan_ev["steps"] if plan_ev else None,
        execution=execution,
        final_world=world_evs[-1] if world_evs else None,
        events=events,
    )


def audit_log_safety(events: list[SessionEvent]) -> list[str]:
    """Safety scan: no Executing before a Confirmed; pours conserve substance."""
    problems: list[str] = []
    first_confirmed = next((e.seq for e in events if e.kind == "confirmed"), None)
    first_executing = next(
        (e.seq for e in events
         if e.kind == "phase" and e.payload.get("phase") == SessionPhase.EXECUTING.value),
        None)
    if first_executing is not None and (first_confirmed is None
                                        or first_confirmed > first_executing):
        problems.append(f"Executing at seq {first_executing} precedes any Confirmed")
    for e in events:
        if e.kind == "execution_result":
            before = e.payload.get("totals_before", {})
            after = e.payload.get("totals_after", {})
            for substance in set(before) | set(after):
                if abs(before.get(substance, 0.0) - after.get(substance, 0.0)) > 1e-9:
                    problems.append(
                        f"substance '{substance}' not conserved at seq {e.seq}")
    return problems


def audit_log_dir(log_dir: str) -> list[str]:
    problems = []
    for name in sorted(os.listdir(log_dir)):
        if not name.endswith(".jsonl"):
            continue
        with open(os.path.join(log_dir, name), "r", encoding="utf-8") as fh:
            events = read_event_log(fh)
        for p in audit_log_safety(events):
            problems.append(f"{name}: {p}")
    return problems
