"""HTTP service: session lifecycle, gaze ingestion and event streaming.

Sessions are independent engines over per-session world copies. Events fan
out to any number of server-sent-event subscribers through bounded queues;
a subscriber that falls behind is dropped with a notice event rather than
blocking the pipeline. Logs persist as append-only JSONL per session.
"""

from __future__ import annotations

import json
import os
import queue
import threading
import uuid
from dataclasses import dataclass, field

from fastapi import FastAPI, HTTPException
from fastapi.responses import JSONResponse, StreamingResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .llm import HttpLLMClient, LLMClient, MockLLMClient
from .perception import GazeSample, SceneGeometry
from .scripts import FIXTURE_NAMES, builtin_fixture
from .session import SessionConfig, SessionEngine, SessionEvent
from .world import WorldState

SUBSCRIBER_BUFFER = 512


class CreateSession(BaseModel):
    fixture: str | dict = "pour_water"
    mode: str = "live"


class GazeIn(BaseModel):
    gx: float
    gy: float
    t_us: int
    on_screen: bool = True


@dataclass
class _Managed:
    engine: SessionEngine
    lock: threading.Lock = field(default_factory=threading.Lock)
    subscribers: list[queue.Queue] = field(default_factory=list)

    def broadcast(self, events: list[SessionEvent]) -> None:
        dead = []
        for q in self.subscribers:
            for ev in events:
                try:
                    q.put_nowait(ev)
                except queue.Full:
                    dead.append(q)
                    break
        for q in dead:
            self.subscribers.remove(q)
            try:
                q.put_nowait(None)  # slow-subscriber drop notice
            except queue.Full:
                pass


@dataclass
class ServerContext:
    predictor: object
    llm_client: LLMClient
    config: SessionConfig
    geometry: SceneGeometry
    logs_dir: str
    sessions: dict[str, _Managed] = field(default_factory=dict)


def _resolve_fixture(fixture: str | dict) -> WorldState:
    if isinstance(fixture, dict):
        return WorldState.from_dict(fixture)
    if fixture in FIXTURE_NAMES:
        return builtin_fixture(fixture)
    if os.path.exists(fixture):
        with open(fixture, "r", encoding="utf-8") as fh:
            return WorldState.from_dict(json.load(fh))
    raise HTTPException(status_code=400, detail=f"unknown fixture {fixture!r}")


def create_app(
    predictor,
    llm_client: LLMClient | None = None,
    config: SessionConfig = SessionConfig(),
    geometry: SceneGeometry = SceneGeometry(),
    logs_dir: str = "logs",
    ui_dir: str | None = None,
) -> FastAPI:
    os.makedirs(logs_dir, exist_ok=True)
    ctx = ServerContext(predictor=predictor,
                        llm_client=llm_client or MockLLMClient(),
                        config=config, geometry=geometry, logs_dir=logs_dir)
    app = FastAPI(title="gazeassist")
    app.state.ctx = ctx

    def managed(session_id: str) -> _Managed:
        m = ctx.sessions.get(session_id)
        if m is None:
            raise HTTPException(status_code=404, detail="no such session")
        return m

    @app.get("/healthz")
    def healthz():
        return {"ok": True, "sessions": len(ctx.sessions)}

    @app.get("/config")
    def config_info():
        return {
            "scene": {"width_px": ctx.geometry.width_px,
                      "height_px": ctx.geometry.height_px},
            "fixtures": list(FIXTURE_NAMES),
            "event_version": "event-v1",
        }

    @app.post("/sessions", status_code=201)
    def create_session(body: CreateSession):
        world = _resolve_fixture(body.fixture)
        session_id = uuid.uuid4().hex[:12]
        log_path = os.path.join(ctx.logs_dir, f"{session_id}.jsonl")
        engine = SessionEngine(
            session_id=session_id, world=world, predictor=ctx.predictor,
            llm_client=ctx.llm_client, config=ctx.config, log_path=log_path)
        m = _Managed(engine=engine)
        ctx.sessions[session_id] = m
        m.broadcast(engine.events)
        return {"id": session_id, "phase": engine.phase.value,
                "fixture": body.fixture if isinstance(body.fixture, str) else "inline",
                "mode": body.mode}

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        m = managed(session_id)
        with m.lock:
            return {"id": session_id, "phase": m.engine.phase.value,
                    "seq": len(m.engine.events),
                    "world": m.engine.world.to_dict()}

    @app.post("/sessions/{session_id}/gaze")
    def post_gaze(session_id: str, body: GazeIn):
        m = managed(session_id)
        with m.lock:
            events = m.engine.submit_gaze(GazeSample(
                t_us=body.t_us, gx=body.gx, gy=body.gy, on_screen=body.on_screen))
            m.broadcast(events)
            return {"accepted": True, "phase": m.engine.phase.value,
                    "seq": len(m.engine.events)}

    @app.post("/sessions/{session_id}/abort")
    def abort_session(session_id: str):
        m = managed(session_id)
        with m.lock:
            last_t = m.engine.events[-1].t_us if m.engine.events else 0
            before = len(m.engine.events)
            m.engine.abort("client_abort", last_t)
            m.broadcast(m.engine.events[before:])
            return {"id": session_id, "phase": m.engine.phase.value}

    @app.get("/sessions/{session_id}/events")
    def stream_events(session_id: str, after: int = -1):
        m = managed(session_id)

        def sse(ev: SessionEvent) -> str:
            return f"id: {ev.seq}\ndata: {ev.to_json_line()}\n\n"

        def generate():
            q: queue.Queue = queue.Queue(maxsize=SUBSCRIBER_BUFFER)
            with m.lock:
                backlog = [e for e in m.engine.events if e.seq > after]
                terminal = m.engine.terminal
                if not terminal:
                    m.subscribers.append(q)
            last_seq = after
            for ev in backlog:
                last_seq = ev.seq
                yield sse(ev)
            if terminal:
                return
            while True:
                try:
                    ev = q.get(timeout=1.0)
                except queue.Empty:
                    with m.lock:
                        if m.engine.terminal:
                            return
                    yield ": keepalive\n\n"
                    continue
                if ev is None:
                    yield "event: dropped\ndata: {\"reason\": \"slow subscriber\"}\n\n"
                    return
                if ev.seq <= last_seq:
                    continue
                last_seq = ev.seq
                yield sse(ev)
                if ev.kind == "phase" and ev.payload.get("phase") in ("Done", "Aborted"):
                    return

        return StreamingResponse(generate(), media_type="text/event-stream")

    @app.get("/sessions/{session_id}/log")
    def get_log(session_id: str):
        m = managed(session_id)
        with m.lock:
            return JSONResponse(
                [json.loads(e.to_json_line()) for e in m.engine.events])

    if ui_dir is not None and os.path.isdir(ui_dir):
        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
