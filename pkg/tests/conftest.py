import sys
from pathlib import Path

import pytest

REPO_ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO_ROOT / "scripts"))

import make_fixture_session as fixture_builder  # noqa: E402

from fieldlens.session import (  # noqa: E402
    CameraGeometry,
    Frame,
    GazeSample,
    QueryRecord,
    SessionRecording,
    UserProfile,
    load_profile,
    load_session,
)


@pytest.fixture(scope="session")
def fixture_paths(tmp_path_factory) -> tuple[Path, Path]:
    """The bundled deterministic recording, built once per test session."""
    root = tmp_path_factory.mktemp("fixture")
    return fixture_builder.build_fixture(root)


@pytest.fixture(scope="session")
def fixture_recording(fixture_paths) -> SessionRecording:
    return load_session(fixture_paths[0])


@pytest.fixture(scope="session")
def fixture_profile(fixture_paths) -> UserProfile:
    return load_profile(fixture_paths[1])


def make_profile(**overrides) -> UserProfile:
    base = dict(
        values_interests=("street trees", "industrial history"),
        age="34",
        gender="female",
        citizenship="Netherlands",
        residence="Rotterdam",
        education="BA design",
        occupation="illustrator",
        preferred_language="en",
    )
    base.update(overrides)
    return UserProfile(**base)


def make_recording(
    n_frames: int = 0,
    fps: float = 4.0,
    gaze: list[GazeSample] | None = None,
    queries: list[QueryRecord] | None = None,
    frame_refs: list[str] | None = None,
    session_id: str = "synthetic",
) -> SessionRecording:
    """In-memory recording; frame image_refs are opaque strings, so pair it
    with embedders built with read_bytes=False."""
    if frame_refs is None:
        frame_refs = [f"mem://{session_id}/frame-{i}" for i in range(n_frames)]
    frames = [
        Frame(t_ms=round(i * 1000.0 / fps), image_ref=ref, width_px=64, height_px=48)
        for i, ref in enumerate(frame_refs)
    ]
    return SessionRecording(
        session_id=session_id,
        start_wallclock="2024-05-18T10:30:00+08:00",
        location="test bench",
        geometry=CameraGeometry(),
        fps=fps,
        frames=frames,
        gaze=list(gaze or []),
        queries=list(queries or []),
    )
