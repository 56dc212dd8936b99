"""HTTP + WebSocket service around the replay engine.

Clients upload a recorded session and a profile, start a run, then follow
the run's event stream over a WebSocket. Every event carries a cursor, and
a reconnecting client passes ?cursor=N to resume exactly where it left off.
Button presses arrive over plain POSTs and take effect immediately, even
while the engine thread is mid-pipeline.

The service itself holds no provider credentials; live providers read their
keys from the environment at call time, and nothing secret appears in
responses or logs.
"""

from __future__ import annotations

import asyncio
import copy
import json
import re
import shutil
import tempfile
import threading
import zipfile
from pathlib import Path
from typing import Optional

from fastapi import Depends, FastAPI, File, HTTPException, Request, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import FileResponse
from fastapi.websockets import WebSocket, WebSocketDisconnect

from .config import ConfigError, EngineConfig, config_from_dict
from .history import HistoryStore
from .orchestrator import Button, ButtonEvent, Orchestrator, ProviderSet
from .session import (
    ProfileError,
    SessionFormatError,
    SessionRecording,
    UserProfile,
    load_profile,
    load_session,
)

# Trace events forwarded to clients. Prompt bodies stay server-side: they
# are bulky and belong in the trace log, not on the UI wire.
PROTOCOL_EVENT_TYPES = frozenset(
    {
        "RunStarted",
        "StateChanged",
        "FrameTick",
        "Trigger",
        "Suppressed",
        "NoDelivery",
        "ProviderError",
        "ContextReady",
        "Delivery",
        "DeliveryDropped",
        "ButtonPressed",
        "Canceled",
        "Metrics",
        "RunFinished",
        "RunAborted",
    }
)

_ID_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9_.-]*$")
_FRAME_NAME_RE = re.compile(r"^\d{6}\.(jpg|jpeg|png)$")


def _rewrite_frame_urls(event: dict, session_id: str) -> dict:
    """Point frame references at this service's frame route."""
    base = f"/sessions/{session_id}/frames/"
    event = copy.deepcopy(event)
    if event["type"] == "FrameTick":
        event["frame_file"] = base + event["frame_file"].rsplit("/", 1)[-1]
    elif event["type"] == "Delivery":
        for item in event["delivery"]["items"]:
            image = item.get("image")
            if image and image.get("frame_file"):
                image["frame_file"] = base + image["frame_file"].rsplit("/", 1)[-1]
    return event


class RunHandle:
    """One engine thread plus the event backlog its clients replay."""

    def __init__(self, run_id: str, session_id: str, profile_id: str) -> None:
        self.run_id = run_id
        self.session_id = session_id
        self.profile_id = profile_id
        self.orchestrator: Optional[Orchestrator] = None
        self.thread: Optional[threading.Thread] = None
        self.finished = False
        self.error: Optional[str] = None
        self._events: list[dict] = []
        self._lock = threading.Lock()
        self._subscribers: set[tuple[asyncio.Event, asyncio.AbstractEventLoop]] = set()

    def publish(self, event: dict) -> None:
        if event["type"] not in PROTOCOL_EVENT_TYPES:
            return
        with self._lock:
            self._events.append(_rewrite_frame_urls(event, self.session_id))
            subscribers = list(self._subscribers)
        self._notify(subscribers)

    def mark_finished(self, error: Optional[str] = None) -> None:
        with self._lock:
            self.finished = True
            self.error = error
            subscribers = list(self._subscribers)
        self._notify(subscribers)

    @staticmethod
    def _notify(subscribers: list[tuple[asyncio.Event, asyncio.AbstractEventLoop]]) -> None:
        for flag, loop in subscribers:
            try:
                loop.call_soon_threadsafe(flag.set)
            except RuntimeError:
                pass  # subscriber's loop already closed

    def subscribe(self, flag: asyncio.Event, loop: asyncio.AbstractEventLoop) -> None:
        with self._lock:
            self._subscribers.add((flag, loop))

    def unsubscribe(self, flag: asyncio.Event, loop: asyncio.AbstractEventLoop) -> None:
        with self._lock:
            self._subscribers.discard((flag, loop))

    def events_since(self, cursor: int) -> tuple[list[dict], bool]:
        with self._lock:
            return self._events[cursor:], self.finished

    @property
    def event_count(self) -> int:
        with self._lock:
            return len(self._events)


def create_app(
    data_dir: Path,
    base_config: Optional[EngineConfig] = None,
    providers_mode: str = "mock",
    seed: str = "0",
    token: Optional[str] = None,
) -> FastAPI:
    from .cli import build_providers  # deferred: cli imports this module lazily

    data_dir = Path(data_dir)
    sessions_dir = data_dir / "sessions"
    profiles_dir = data_dir / "profiles"
    history_dir = data_dir / "history"
    for d in (sessions_dir, profiles_dir, history_dir):
        d.mkdir(parents=True, exist_ok=True)

    base = base_config if base_config is not None else EngineConfig()
    base.validate()

    app = FastAPI(title="fieldlens service")
    # The browser client is served from its own origin; the static token is
    # the only auth, so a wildcard origin gives away nothing extra.
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    recordings: dict[str, SessionRecording] = {}
    profiles: dict[str, UserProfile] = {}
    runs: dict[str, RunHandle] = {}
    run_counter = {"next": 1}
    state_lock = threading.Lock()

    def known_sessions() -> list[str]:
        return sorted(
            p.name for p in sessions_dir.iterdir() if (p / "manifest.json").exists()
        )

    def known_profiles() -> list[str]:
        return sorted(p.stem for p in profiles_dir.glob("*.json"))

    async def require_auth(request: Request) -> None:
        if token is None:
            return
        if request.headers.get("authorization") == f"Bearer {token}":
            return
        if request.query_params.get("token") == token:
            return
        raise HTTPException(status_code=401, detail="missing or wrong token")

    auth = [Depends(require_auth)]

    # -- uploads -----------------------------------------------------

    @app.post("/sessions", dependencies=auth, status_code=201)
    async def upload_session(archive: UploadFile = File(...)) -> dict:
        with tempfile.TemporaryDirectory(prefix="fieldlens-upload-") as tmp:
            tmp_path = Path(tmp)
            archive_path = tmp_path / "archive.zip"
            with archive_path.open("wb") as fh:
                shutil.copyfileobj(archive.file, fh)
            extract_root = tmp_path / "x"
            try:
                with zipfile.ZipFile(archive_path) as zf:
                    for member in zf.namelist():
                        target = (extract_root / member).resolve()
                        if not target.is_relative_to(extract_root.resolve()):
                            raise HTTPException(400, f"unsafe archive member {member!r}")
                    zf.extractall(extract_root)
            except zipfile.BadZipFile as exc:
                raise HTTPException(400, f"not a zip archive: {exc}") from exc

            manifests = sorted(
                extract_root.rglob("manifest.json"), key=lambda p: len(p.parts)
            )
            if not manifests:
                raise HTTPException(400, "archive contains no manifest.json")
            root = manifests[0].parent
            try:
                recording = load_session(root)
            except SessionFormatError as exc:
                raise HTTPException(400, f"invalid session: {exc}") from exc

            dest = sessions_dir / recording.session_id
            with state_lock:
                if dest.exists():
                    raise HTTPException(409, f"session {recording.session_id!r} already exists")
                shutil.copytree(root, dest)
        return {
            "session_id": recording.session_id,
            "duration_ms": recording.duration_ms,
            "frames": len(recording.frames),
        }

    @app.post("/profiles", dependencies=auth, status_code=201)
    async def upload_profile(body: dict) -> dict:
        profile_id = body.get("profile_id")
        if not isinstance(profile_id, str) or not _ID_RE.match(profile_id):
            raise HTTPException(400, "profile_id must be a simple identifier")
        raw = body.get("profile")
        if not isinstance(raw, dict):
            raise HTTPException(400, "profile must be a JSON object")
        dest = profiles_dir / f"{profile_id}.json"
        dest.write_text(json.dumps(raw, indent=2) + "\n", encoding="utf-8")
        try:
            profile = load_profile(dest)
        except ProfileError as exc:
            dest.unlink()
            raise HTTPException(400, f"invalid profile: {exc}") from exc
        with state_lock:
            profiles[profile_id] = profile
        return {"profile_id": profile_id}

    @app.get("/sessions", dependencies=auth)
    async def list_sessions() -> dict:
        return {"sessions": known_sessions()}

    @app.get("/profiles", dependencies=auth)
    async def list_profiles() -> dict:
        return {"profiles": known_profiles()}

    # -- frames ------------------------------------------------------

    @app.get("/sessions/{session_id}/frames/{name}", dependencies=auth)
    async def get_frame(session_id: str, name: str) -> FileResponse:
        if not _ID_RE.match(session_id) or not _FRAME_NAME_RE.match(name):
            raise HTTPException(400, "bad session id or frame name")
        path = sessions_dir / session_id / "frames" / name
        if not path.exists():
            raise HTTPException(404, "no such frame")
        media = "image/png" if name.endswith(".png") else "image/jpeg"
        return FileResponse(path, media_type=media)

    # -- runs --------------------------------------------------------

    def _load_recording(session_id: str) -> SessionRecording:
        with state_lock:
            cached = recordings.get(session_id)
        if cached is not None:
            return cached
        root = sessions_dir / session_id
        if not (root / "manifest.json").exists():
            raise HTTPException(404, f"unknown session {session_id!r}")
        try:
            recording = load_session(root)
        except SessionFormatError as exc:
            raise HTTPException(400, f"session unreadable: {exc}") from exc
        with state_lock:
            recordings[session_id] = recording
        return recording

    def _load_profile_by_id(profile_id: str) -> UserProfile:
        with state_lock:
            cached = profiles.get(profile_id)
        if cached is not None:
            return cached
        path = profiles_dir / f"{profile_id}.json"
        if not path.exists():
            raise HTTPException(404, f"unknown profile {profile_id!r}")
        try:
            profile = load_profile(path)
        except ProfileError as exc:
            raise HTTPException(400, f"profile unreadable: {exc}") from exc
        with state_lock:
            profiles[profile_id] = profile
        return profile

    @app.post("/runs", dependencies=auth, status_code=201)
    async def start_run(body: dict) -> dict:
        session_id = body.get("session_id")
        profile_id = body.get("profile_id")
        if not isinstance(session_id, str) or not isinstance(profile_id, str):
            raise HTTPException(400, "session_id and profile_id are required")
        pace = body.get("pace", "fast")
        if pace not in ("fast", "realtime"):
            raise HTTPException(400, "pace must be 'fast' or 'realtime'")
        speed = body.get("speed", 1.0)
        if not isinstance(speed, (int, float)) or speed <= 0:
            raise HTTPException(400, "speed must be a positive number")

        recording = _load_recording(session_id)
        profile = _load_profile_by_id(profile_id)

        merged = base.to_dict()
        overrides = body.get("config") or {}
        if not isinstance(overrides, dict):
            raise HTTPException(400, "config must be a JSON object")
        merged.update(overrides)
        try:
            config = config_from_dict(merged)
            providers = build_providers(config, providers_mode, seed)
        except ConfigError as exc:
            raise HTTPException(400, f"bad config: {exc}") from exc

        with state_lock:
            run_id = f"r{run_counter['next']:04d}"
            run_counter["next"] += 1
            handle = RunHandle(run_id, session_id, profile_id)
            runs[run_id] = handle

        store = HistoryStore(history_dir / f"{profile_id}.jsonl")
        engine_run_id = f"{recording.session_id}.{run_id}"

        pacer = None
        if pace == "realtime":
            import time

            start = time.monotonic()

            def pacer(t_ms: int, _start=start, _speed=float(speed)) -> None:
                delay = t_ms / 1000.0 / _speed - (time.monotonic() - _start)
                if delay > 0:
                    time.sleep(delay)

        orchestrator = Orchestrator(
            recording=recording,
            profile=profile,
            config=config,
            providers=providers,
            history=store,
            run_id=engine_run_id,
            on_event=handle.publish,
            pacer=pacer,
            async_jobs=True,
        )
        handle.orchestrator = orchestrator

        def engine() -> None:
            try:
                orchestrator.run()
            except Exception as exc:  # surfaced to clients, not swallowed
                handle.publish(
                    {
                        "schema": "trace/1",
                        "type": "RunAborted",
                        "t_ms": orchestrator.current_t_ms,
                        "error": f"{type(exc).__name__}: {exc}",
                    }
                )
                handle.mark_finished(error=f"{type(exc).__name__}: {exc}")
            else:
                handle.mark_finished()

        thread = threading.Thread(target=engine, name=f"engine-{run_id}", daemon=True)
        handle.thread = thread
        thread.start()
        return {"run_id": run_id, "session_id": session_id, "profile_id": profile_id}

    @app.get("/runs/{run_id}", dependencies=auth)
    async def run_status(run_id: str) -> dict:
        handle = runs.get(run_id)
        if handle is None:
            raise HTTPException(404, f"unknown run {run_id!r}")
        orch = handle.orchestrator
        if handle.error is not None:
            state = "aborted"
        elif handle.finished:
            state = "finished"
        else:
            state = "running"
        return {
            "run_id": run_id,
            "session_id": handle.session_id,
            "profile_id": handle.profile_id,
            "state": state,
            "error": handle.error,
            "events": handle.event_count,
            "deliveries": len(orch.deliveries) if orch is not None else 0,
            "system_on": orch.control.system_on if orch is not None else None,
            "muted": orch.control.muted if orch is not None else None,
        }

    @app.post("/runs/{run_id}/buttons", dependencies=auth, status_code=204)
    async def press_button(run_id: str, body: dict) -> None:
        handle = runs.get(run_id)
        if handle is None:
            raise HTTPException(404, f"unknown run {run_id!r}")
        if handle.finished:
            raise HTTPException(409, "run already finished")
        name = body.get("button")
        try:
            button = Button(name)
        except ValueError:
            raise HTTPException(400, f"unknown button {name!r}") from None
        orch = handle.orchestrator
        assert orch is not None
        try:
            event = ButtonEvent(
                button=button,
                t_ms=orch.current_t_ms,
                query_text=body.get("query_text"),
            )
        except ValueError as exc:
            raise HTTPException(400, str(exc)) from exc
        orch.handle_button(event)

    # -- the event stream --------------------------------------------

    @app.websocket("/runs/{run_id}/events")
    async def run_events(websocket: WebSocket, run_id: str, cursor: int = 0) -> None:
        if token is not None:
            supplied = websocket.query_params.get("token")
            header = websocket.headers.get("authorization")
            if supplied != token and header != f"Bearer {token}":
                await websocket.close(code=4401)
                return
        handle = runs.get(run_id)
        if handle is None:
            await websocket.close(code=4404)
            return
        await websocket.accept()
        cursor = max(0, cursor)
        flag = asyncio.Event()
        loop = asyncio.get_running_loop()
        handle.subscribe(flag, loop)
        try:
            while True:
                flag.clear()
                batch, finished = handle.events_since(cursor)
                for event in batch:
                    await websocket.send_json({"cursor": cursor, "event": event})
                    cursor += 1
                if batch:
                    continue  # re-check before sleeping: more may have landed
                if finished:
                    break
                await flag.wait()
            await websocket.close(code=1000)
        except WebSocketDisconnect:
            pass
        finally:
            handle.unsubscribe(flag, loop)

    return app
