"""Live session server: WebSocket bridge between the browser UI and a session.

Each connection drives one experiment session. The session itself runs in a
worker thread (the orchestrator is synchronous); the WebSocket handler feeds
latched control commands in through a shared holder and drains an outbound
queue of wire messages. State messages stream at the simulation rate (20 Hz
at the default dt); when the queue backs up, the oldest state messages are
dropped first and everything else is kept.

A dropped connection aborts the current trial. The session stays resumable
at the same trial for a grace window; reconnecting with the same session id
picks it up, otherwise the log is finalized.

Wire protocol: newline-free JSON objects, each carrying schema_version ``v``
and a per-session monotonically increasing ``seq``. Client to server:
``hello``, ``ready``, ``control`` (forward | reverse | brake). Server to
client: ``session_info``, ``block_start``, ``trial_start``, ``state``,
``trial_end``, ``pause``, ``session_end``, ``error``.
"""

from __future__ import annotations

import asyncio
import json
import threading
import time
import wave
from collections import deque
from pathlib import Path

from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import FileResponse, JSONResponse
from fastapi.staticfiles import StaticFiles

from .config import SessionConfig
from .driver import HumanCommand
from .logs import SCHEMA_VERSION
from .mdp import MusicCondition
from .orchestrator import SessionHooks, TrialAborted, run_session

WIRE_VERSION = 1
STATE_QUEUE_LIMIT = 512


class WireOutbox:
    """Thread-safe outbound buffer; oldest state messages are shed first."""

    def __init__(self) -> None:
        self._items: deque[dict] = deque()
        self._lock = threading.Lock()
        self._seq = 0
        self.closed = False

    def put(self, kind: str, payload: dict) -> None:
        with self._lock:
            message = {"v": WIRE_VERSION, "seq": self._seq, "kind": kind, **payload}
            self._seq += 1
            self._items.append(message)
            if len(self._items) > STATE_QUEUE_LIMIT:
                for i, item in enumerate(self._items):
                    if item["kind"] == "state":
                        del self._items[i]
                        break
                else:
                    self._items.popleft()

    def drain(self) -> list[dict]:
        with self._lock:
            items = list(self._items)
            self._items.clear()
        return items


class LiveHumanSource:
    """Human source backed by latched WebSocket control commands."""

    def __init__(self, cfg: SessionConfig):
        self._cfg = cfg
        self._command = HumanCommand.BRAKE
        self._lock = threading.Lock()
        self.connected = threading.Event()
        self._next_tick: float | None = None

    @property
    def cruise_speed(self) -> float:
        return self._cfg.world.speed_fast

    @property
    def start_lag(self) -> float:
        return 0.0

    def set_command(self, command: HumanCommand) -> None:
        with self._lock:
            self._command = command

    def begin_trial(self, condition: MusicCondition) -> None:
        with self._lock:
            self._command = HumanCommand.BRAKE
        self._next_tick = None

    def decide(self, world) -> HumanCommand:
        if not self.connected.is_set():
            raise TrialAborted("participant disconnected")
        if self._cfg.realtime:
            now = time.monotonic()
            if self._next_tick is None:
                self._next_tick = now
            delay = self._next_tick - now
            if delay > 0:
                time.sleep(delay)
            self._next_tick += self._cfg.world.dt
        with self._lock:
            return self._command

    def target_speed(self, command: HumanCommand) -> float:
        if command is HumanCommand.FORWARD:
            return self.cruise_speed
        if command is HumanCommand.REVERSE:
            return -self._cfg.world.speed_reverse
        return 0.0


class LiveHooks(SessionHooks):
    """Bridges orchestrator events onto the wire and enforces pacing."""

    def __init__(self, cfg: SessionConfig, outbox: WireOutbox, source: LiveHumanSource):
        self._cfg = cfg
        self._outbox = outbox
        self._source = source

    def on_event(self, kind: str, payload: dict) -> None:
        if kind == "block_start":
            self._outbox.put("block_start", payload)
        elif kind == "trial_start":
            self._outbox.put(
                "trial_start",
                {
                    "trial_index": payload["trial_index"],
                    "block_index": payload["block_index"],
                    "mode": payload["mode"],
                },
            )
        elif kind == "trial_end":
            outcome = payload["outcome"]
            self._outbox.put(
                "trial_end",
                {
                    "trial_index": payload["trial_index"],
                    "outcome": {
                        "crashed": outcome["crashed"],
                        "timed_out": outcome["timed_out"],
                        "aborted": outcome["aborted"],
                    },
                    "agent_time": outcome["agent_time"],
                    "human_time": outcome["human_time"],
                },
            )
        elif kind == "session_end":
            self._outbox.put("session_end", {"trials_completed": payload["trials_completed"]})

    def on_step(self, world, trial_index: int) -> None:
        self._outbox.put(
            "state",
            {
                "trial_index": trial_index,
                "agent_pos": world.agent.progress,
                "human_pos": world.human.progress,
                "agent_speed": world.agent.speed,
                "human_speed": world.human.speed,
                "elapsed": world.elapsed,
            },
        )

    def pause(self, reason: str, seconds: float) -> None:
        self._outbox.put(
            "pause", {"reason": reason, "duration_ms": int(round(seconds * 1000))}
        )
        if self._cfg.realtime:
            time.sleep(seconds)

    def wait_for_resume(self) -> bool:
        deadline = time.monotonic() + self._cfg.resume_timeout_s
        while time.monotonic() < deadline:
            if self._outbox.closed:
                return False
            if self._source.connected.wait(timeout=0.1):
                return True
        return False


class LiveSession:
    def __init__(self, session_id: str, cfg: SessionConfig, log_path: Path):
        self.session_id = session_id
        self.cfg = cfg
        self.log_path = log_path
        self.outbox = WireOutbox()
        self.source = LiveHumanSource(cfg)
        self.hooks = LiveHooks(cfg, self.outbox, self.source)
        self.thread: threading.Thread | None = None
        self.done = threading.Event()

    def start(self) -> None:
        def work() -> None:
            try:
                if self.cfg.realtime and self.cfg.warmup_seconds > 0:
                    self._run_warmup()
                run_session(
                    self.cfg, self.log_path, source=self.source, hooks=self.hooks, live=True
                )
            finally:
                self.done.set()

        self.thread = threading.Thread(target=work, daemon=True, name=f"session-{self.session_id}")
        self.thread.start()

    def _run_warmup(self) -> None:
        """Free practice drives before recording starts; nothing is logged."""
        import numpy as np

        from .mdp import Action
        from .orchestrator import agent_target_speed
        from .sim import (
            arm_agent_wait,
            decision_point,
            initial_world,
            is_terminal,
            sample_wait,
            step,
        )

        rng = np.random.default_rng()
        wcfg = self.cfg.world
        self.outbox.put(
            "pause",
            {"reason": "warmup", "duration_ms": int(self.cfg.warmup_seconds * 1000)},
        )
        end = time.monotonic() + self.cfg.warmup_seconds
        while time.monotonic() < end:
            world = initial_world()
            self.source.begin_trial(MusicCondition.HAPPY)
            action = Action(int(rng.integers(0, 3)))
            try:
                while not is_terminal(world, wcfg) and time.monotonic() < end:
                    cmd = self.source.decide(world)
                    prev = world
                    world = step(
                        world, wcfg, self.source.target_speed(cmd),
                        agent_target_speed(action, wcfg),
                    )
                    self.hooks.on_step(world, -1)
                    if (
                        action is Action.BRAKE
                        and world.agent.speed == 0.0
                        and not world.agent.waiting
                        and not prev.agent.waiting
                    ):
                        world = arm_agent_wait(world, sample_wait(rng))
                    if decision_point(prev.agent, world.agent, wcfg, world.elapsed):
                        action = Action(int(rng.integers(0, 3)))
            except TrialAborted:
                if not self.source.connected.wait(timeout=self.cfg.resume_timeout_s):
                    return


def ensure_placeholder_tracks(tracks_dir: Path, cfg: SessionConfig) -> Path:
    """Write silent WAV placeholders and a manifest when no tracks exist."""
    tracks_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = tracks_dir / "manifest.json"
    if manifest_path.exists():
        return manifest_path
    entries = []
    for pool, track_ids in (("happy", cfg.happy_tracks), ("sad", cfg.sad_tracks)):
        for track_id in track_ids:
            filename = f"{track_id}.wav"
            path = tracks_dir / filename
            if not path.exists():
                with wave.open(str(path), "wb") as fh:
                    fh.setnchannels(1)
                    fh.setsampwidth(2)
                    fh.setframerate(8000)
                    fh.writeframes(b"\x00\x00" * 8000)  # one second of silence
            entries.append({"track_id": track_id, "pool": pool, "file": filename})
    manifest_path.write_text(json.dumps({"tracks": entries}, indent=2, sort_keys=True) + "\n")
    return manifest_path


def create_app(
    cfg: SessionConfig,
    tracks_dir: Path | None = None,
    log_dir: Path | None = None,
    frontend_dir: Path | None = None,
) -> FastAPI:
    app = FastAPI(title="crossing session server")
    log_dir = Path(log_dir or "live_logs")
    log_dir.mkdir(parents=True, exist_ok=True)
    tracks_dir = Path(tracks_dir or (log_dir / "tracks"))
    manifest_path = ensure_placeholder_tracks(tracks_dir, cfg)
    sessions: dict[str, LiveSession] = {}
    lock = threading.Lock()

    app.mount("/tracks", StaticFiles(directory=tracks_dir), name="tracks")
    if frontend_dir is None:
        candidate = Path(__file__).resolve().parents[2] / "frontend" / "dist"
        frontend_dir = candidate if candidate.exists() else None
    if frontend_dir is not None and Path(frontend_dir).exists():
        app.mount("/ui", StaticFiles(directory=frontend_dir, html=True), name="ui")

    @app.get("/manifest")
    def manifest() -> FileResponse:
        return FileResponse(manifest_path, media_type="application/json")

    @app.get("/healthz")
    def healthz() -> JSONResponse:
        return JSONResponse({"ok": True})

    async def pump_outbox(ws: WebSocket, session: LiveSession) -> None:
        while True:
            for message in session.outbox.drain():
                await ws.send_text(json.dumps(message, separators=(",", ":")))
                if message["kind"] == "session_end":
                    return
            if session.done.is_set() and not session.outbox.drain():
                return
            await asyncio.sleep(0.005)

    @app.websocket("/session")
    async def session_endpoint(ws: WebSocket) -> None:
        await ws.accept()
        try:
            raw = await ws.receive_text()
            hello = json.loads(raw)
        except (WebSocketDisconnect, json.JSONDecodeError):
            await ws.close()
            return
        if hello.get("kind") != "hello" or hello.get("v") != WIRE_VERSION:
            await ws.send_text(
                json.dumps(
                    {
                        "v": WIRE_VERSION,
                        "seq": 0,
                        "kind": "error",
                        "message": f"expected hello with v={WIRE_VERSION}",
                    }
                )
            )
            await ws.close()
            return
        session_id = str(hello.get("session_id") or f"session-{int(time.time() * 1000)}")
        with lock:
            session = sessions.get(session_id)
            if session is None:
                session = LiveSession(
                    session_id, cfg, log_dir / f"{session_id}.jsonl"
                )
                sessions[session_id] = session
            resumed = session.thread is not None

        session.outbox.put(
            "session_info",
            {
                "schema_version": SCHEMA_VERSION,
                "session_id": session_id,
                "blocks": cfg.blocks,
                "trials_per_block": cfg.trials_per_block,
                "total_trials": cfg.total_trials,
                "warmup_seconds": cfg.warmup_seconds if cfg.realtime else 0.0,
                "realtime": cfg.realtime,
                "resumed": resumed,
            },
        )

        async def receive_loop() -> None:
            while True:
                raw = await ws.receive_text()
                try:
                    message = json.loads(raw)
                except json.JSONDecodeError:
                    continue
                kind = message.get("kind")
                if kind == "control":
                    command = message.get("command")
                    try:
                        session.source.set_command(HumanCommand(command))
                    except ValueError:
                        pass
                elif kind == "ready":
                    session.source.connected.set()
                    if session.thread is None:
                        session.start()

        pump = asyncio.create_task(pump_outbox(ws, session))
        try:
            receiver = asyncio.create_task(receive_loop())
            done, pending = await asyncio.wait(
                {pump, receiver}, return_when=asyncio.FIRST_COMPLETED
            )
            for task in pending:
                task.cancel()
        except WebSocketDisconnect:
            pump.cancel()
        finally:
            session.source.connected.clear()
            if session.done.is_set():
                with lock:
                    sessions.pop(session_id, None)
            try:
                await ws.close()
            except RuntimeError:
                pass

    return app
