"""Service surface: uploads, runs, buttons, and the WebSocket event stream."""

from __future__ import annotations

import io
import json
import time
import zipfile

import pytest
from fastapi.testclient import TestClient
from starlette.websockets import WebSocketDisconnect

from fieldlens.config import EngineConfig
from fieldlens.service import PROTOCOL_EVENT_TYPES, create_app

SESSION_ID = "fixture-lakeside-01"
PROFILE_ID = "walker"


@pytest.fixture(scope="session")
def session_zip(fixture_paths) -> bytes:
    session_dir, _ = fixture_paths
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", zipfile.ZIP_DEFLATED) as zf:
        for path in sorted(session_dir.rglob("*")):
            if path.is_file():
                zf.write(path, path.relative_to(session_dir))
    return buf.getvalue()


@pytest.fixture(scope="session")
def profile_body(fixture_paths) -> dict:
    _, profile_path = fixture_paths
    return json.loads(profile_path.read_text(encoding="utf-8"))


def make_client(tmp_path, token=None) -> TestClient:
    app = create_app(
        data_dir=tmp_path / "data",
        base_config=EngineConfig(sample_hz=4.0),
        providers_mode="mock",
        seed="1",
        token=token,
    )
    return TestClient(app)


@pytest.fixture()
def client(tmp_path, session_zip, profile_body) -> TestClient:
    client = make_client(tmp_path)
    resp = client.post("/sessions", files={"archive": ("s.zip", session_zip, "application/zip")})
    assert resp.status_code == 201, resp.text
    resp = client.post("/profiles", json={"profile_id": PROFILE_ID, "profile": profile_body})
    assert resp.status_code == 201, resp.text
    return client


def start_run(client, pace="fast", speed=None, config=None):
    body = {"session_id": SESSION_ID, "profile_id": PROFILE_ID, "pace": pace}
    if speed is not None:
        body["speed"] = speed
    if config is not None:
        body["config"] = config
    resp = client.post("/runs", json=body)
    assert resp.status_code == 201, resp.text
    return resp.json()["run_id"]


def drain_ws(ws, start_cursor=0):
    """Collects events until the server closes; returns (events, close_code)."""
    events = []
    cursor = start_cursor
    while True:
        message = ws.receive()
        if message["type"] == "websocket.close":
            return events, message["code"]
        data = json.loads(message["text"])
        assert data["cursor"] == cursor
        cursor += 1
        events.append(data["event"])


def wait_until(predicate, timeout=10.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        if predicate():
            return
        time.sleep(0.01)
    raise AssertionError("condition not reached in time")


# -- uploads ------------------------------------------------------------


def test_session_upload_lists_and_rejects_duplicates(client, session_zip, fixture_recording):
    resp = client.post("/sessions", files={"archive": ("s.zip", session_zip, "application/zip")})
    assert resp.status_code == 409

    assert client.get("/sessions").json() == {"sessions": [SESSION_ID]}
    assert client.get("/profiles").json() == {"profiles": [PROFILE_ID]}


def test_session_upload_reports_recording_shape(tmp_path, session_zip, fixture_recording):
    client = make_client(tmp_path)
    resp = client.post("/sessions", files={"archive": ("s.zip", session_zip, "application/zip")})
    assert resp.status_code == 201
    body = resp.json()
    assert body["session_id"] == SESSION_ID
    assert body["duration_ms"] == fixture_recording.duration_ms
    assert body["frames"] == len(fixture_recording.frames)


def test_bad_archives_are_rejected(tmp_path):
    client = make_client(tmp_path)
    resp = client.post("/sessions", files={"archive": ("s.zip", b"not a zip", "application/zip")})
    assert resp.status_code == 400
    assert "not a zip" in resp.json()["detail"]

    empty = io.BytesIO()
    with zipfile.ZipFile(empty, "w") as zf:
        zf.writestr("readme.txt", "hello")
    resp = client.post("/sessions", files={"archive": ("s.zip", empty.getvalue(), "application/zip")})
    assert resp.status_code == 400
    assert "manifest" in resp.json()["detail"]

    sneaky = io.BytesIO()
    with zipfile.ZipFile(sneaky, "w") as zf:
        zf.writestr("../escape.txt", "gotcha")
    resp = client.post("/sessions", files={"archive": ("s.zip", sneaky.getvalue(), "application/zip")})
    assert resp.status_code == 400
    assert "unsafe" in resp.json()["detail"]


def test_profile_upload_validation(tmp_path, profile_body):
    client = make_client(tmp_path)
    resp = client.post("/profiles", json={"profile_id": "bad/../id", "profile": profile_body})
    assert resp.status_code == 400

    resp = client.post("/profiles", json={"profile_id": "p1", "profile": "just a string"})
    assert resp.status_code == 400

    resp = client.post("/profiles", json={"profile_id": "p1", "profile": {"Age": "34"}})
    assert resp.status_code == 400
    assert client.get("/profiles").json() == {"profiles": []}


def test_frame_route_serves_bytes_and_guards_names(client, fixture_paths):
    session_dir, _ = fixture_paths
    name = "000000.png"
    resp = client.get(f"/sessions/{SESSION_ID}/frames/{name}")
    assert resp.status_code == 200
    assert resp.headers["content-type"] == "image/png"
    assert resp.content == (session_dir / "frames" / name).read_bytes()

    assert client.get(f"/sessions/{SESSION_ID}/frames/manifest.json").status_code == 400
    assert client.get(f"/sessions/{SESSION_ID}/frames/999999.png").status_code == 404


# -- runs and the event stream ------------------------------------------


def test_fast_run_streams_full_trace(client):
    run_id = start_run(client)
    assert run_id == "r0001"
    with client.websocket_connect(f"/runs/{run_id}/events") as ws:
        events, close_code = drain_ws(ws)
    assert close_code == 1000

    types = [e["type"] for e in events]
    assert types[0] == "RunStarted"
    assert types[-1] == "RunFinished"
    assert types[-2] == "Metrics"
    assert "PromptIssued" not in types
    assert set(types) <= PROTOCOL_EVENT_TYPES
    assert events[0]["run_id"] == f"{SESSION_ID}.r0001"

    triggers = [(e["kind"], e["trigger_t_ms"]) for e in events if e["type"] == "Trigger"]
    assert triggers == [
        ("ConstantSensing", 63_000),
        ("Fixation", 91_500),
        ("ConstantSensing", 123_000),
        ("UserQuery", 150_000),
    ]

    ticks = [e for e in events if e["type"] == "FrameTick"]
    assert ticks
    prefix = f"/sessions/{SESSION_ID}/frames/"
    assert all(e["frame_file"].startswith(prefix) for e in ticks)
    assert all(e["frame_file"].rsplit("/", 1)[-1].endswith(".png") for e in ticks)

    status = client.get(f"/runs/{run_id}").json()
    assert status["state"] == "finished"
    assert status["error"] is None
    assert status["events"] == len(events)


def test_ws_cursor_resume_replays_the_tail(client):
    run_id = start_run(client)
    with client.websocket_connect(f"/runs/{run_id}/events") as ws:
        events, _ = drain_ws(ws)

    tail_start = len(events) - 3
    with client.websocket_connect(f"/runs/{run_id}/events?cursor={tail_start}") as ws:
        tail, close_code = drain_ws(ws, start_cursor=tail_start)
    assert close_code == 1000
    assert tail == events[tail_start:]

    with client.websocket_connect(f"/runs/{run_id}/events?cursor=999999") as ws:
        nothing, close_code = drain_ws(ws, start_cursor=999_999)
    assert nothing == []
    assert close_code == 1000

    with client.websocket_connect(f"/runs/{run_id}/events") as ws:
        replayed, _ = drain_ws(ws)
    assert replayed == events


def test_unknown_ids_return_404(client):
    assert client.get("/runs/r9999").status_code == 404
    assert client.post("/runs/r9999/buttons", json={"button": "Up"}).status_code == 404

    resp = client.post("/runs", json={"session_id": "ghost", "profile_id": PROFILE_ID})
    assert resp.status_code == 404
    resp = client.post("/runs", json={"session_id": SESSION_ID, "profile_id": "ghost"})
    assert resp.status_code == 404

    with pytest.raises(WebSocketDisconnect) as excinfo:
        with client.websocket_connect("/runs/r9999/events"):
            pass
    assert excinfo.value.code == 4404


def test_run_request_validation(client):
    resp = client.post("/runs", json={"session_id": SESSION_ID})
    assert resp.status_code == 400
    resp = client.post("/runs", json={"session_id": SESSION_ID, "profile_id": PROFILE_ID, "pace": "warp"})
    assert resp.status_code == 400
    resp = client.post(
        "/runs", json={"session_id": SESSION_ID, "profile_id": PROFILE_ID, "speed": -2}
    )
    assert resp.status_code == 400
    resp = client.post(
        "/runs",
        json={"session_id": SESSION_ID, "profile_id": PROFILE_ID, "config": {"sample_hz": -1}},
    )
    assert resp.status_code == 400
    assert "bad config" in resp.json()["detail"]


def test_button_presses_steer_a_live_run(client):
    # Realtime pacing keeps virtual trigger spacing far ahead of pipeline
    # wall time, so the delivery outcome is stable run to run.
    run_id = start_run(client, pace="realtime", speed=60)

    def delivered():
        return client.get(f"/runs/{run_id}").json()["deliveries"] >= 1

    wait_until(delivered)
    assert client.post(f"/runs/{run_id}/buttons", json={"button": "Up"}).status_code == 204
    assert (
        client.post(f"/runs/{run_id}/buttons", json={"button": "Sideways"}).status_code == 400
    )
    assert (
        client.post(f"/runs/{run_id}/buttons", json={"button": "Right"}).status_code == 400
    )

    def finished():
        return client.get(f"/runs/{run_id}").json()["state"] == "finished"

    wait_until(finished)
    with client.websocket_connect(f"/runs/{run_id}/events") as ws:
        events, _ = drain_ws(ws)

    effects = [e["effect"] for e in events if e["type"] == "ButtonPressed"]
    assert "canceled d0001" in effects
    canceled = [e["delivery_id"] for e in events if e["type"] == "Canceled"]
    assert canceled == ["d0001"]
    metrics = next(e for e in events if e["type"] == "Metrics")
    assert metrics["metrics"]["cancel_count"] == 1

    resp = client.post(f"/runs/{run_id}/buttons", json={"button": "Up"})
    assert resp.status_code == 409


def test_query_button_reaches_the_engine(client):
    run_id = start_run(client, pace="realtime", speed=100)
    wait_until(lambda: client.get(f"/runs/{run_id}").json()["state"] == "running")
    resp = client.post(
        f"/runs/{run_id}/buttons",
        json={"button": "Right", "query_text": "What bird is that?"},
    )
    assert resp.status_code == 204
    wait_until(lambda: client.get(f"/runs/{run_id}").json()["state"] == "finished")

    with client.websocket_connect(f"/runs/{run_id}/events") as ws:
        events, _ = drain_ws(ws)
    effects = [e["effect"] for e in events if e["type"] == "ButtonPressed"]
    assert "query" in effects
    query_triggers = [e for e in events if e["type"] == "Trigger" and e["kind"] == "UserQuery"]
    assert len(query_triggers) >= 1
    metrics = next(e for e in events if e["type"] == "Metrics")
    assert metrics["metrics"]["user_query_count"] >= 1


def test_delivery_events_rewrite_frame_urls(client):
    run_id = start_run(client, pace="realtime", speed=60)
    wait_until(lambda: client.get(f"/runs/{run_id}").json()["state"] == "finished")
    with client.websocket_connect(f"/runs/{run_id}/events") as ws:
        events, _ = drain_ws(ws)
    deliveries = [e["delivery"] for e in events if e["type"] == "Delivery"]
    assert deliveries, "expected at least one delivery from the paced replay"
    prefix = f"/sessions/{SESSION_ID}/frames/"
    for delivery in deliveries:
        assert 1 <= len(delivery["items"]) <= 2
        for item in delivery["items"]:
            image = item.get("image")
            if image and image.get("frame_file"):
                assert image["frame_file"].startswith(prefix)
                frame = client.get(image["frame_file"])
                assert frame.status_code == 200


# -- auth ---------------------------------------------------------------


def test_token_guards_http_and_ws(tmp_path, session_zip, profile_body):
    client = make_client(tmp_path, token="sesame")
    assert client.get("/sessions").status_code == 401
    assert client.get("/sessions", params={"token": "sesame"}).status_code == 200
    headers = {"Authorization": "Bearer sesame"}
    assert client.get("/sessions", headers=headers).status_code == 200

    resp = client.post(
        "/sessions",
        files={"archive": ("s.zip", session_zip, "application/zip")},
        headers=headers,
    )
    assert resp.status_code == 201
    assert "sesame" not in resp.text

    with pytest.raises(WebSocketDisconnect) as excinfo:
        with client.websocket_connect("/runs/r9999/events"):
            pass
    assert excinfo.value.code == 4401

    with pytest.raises(WebSocketDisconnect) as excinfo:
        with client.websocket_connect("/runs/r9999/events?token=sesame"):
            pass
    assert excinfo.value.code == 4404


def test_cross_origin_browser_clients_are_allowed(client):
    origin = {"Origin": "http://localhost:5173"}
    response = client.get("/sessions", headers=origin)
    assert response.headers["access-control-allow-origin"] == "*"

    preflight = client.options(
        "/runs/r0001/buttons",
        headers={
            **origin,
            "Access-Control-Request-Method": "POST",
            "Access-Control-Request-Headers": "authorization,content-type",
        },
    )
    assert preflight.status_code == 200
    assert "POST" in preflight.headers["access-control-allow-methods"]
