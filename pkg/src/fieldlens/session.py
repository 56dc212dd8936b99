"""Session recordings: on-disk layout, validation, and event merging.

A recording directory looks like::

    manifest.json       session_id, start_wallclock, location, geometry, fps
    frames/000000.jpg   numbered frames; t_ms derived from index and fps
    gaze.jsonl          {"t_ms":..., "x":..., "y":..., "confidence":...}
    queries.jsonl       {"t_ms":..., "text":...}

Malformed input is rejected, never repaired.
"""

from __future__ import annotations

import json
import re
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Union

from PIL import Image

MANIFEST_NAME = "manifest.json"
MANIFEST_SCHEMA = "session/1"

_FRAME_NAME_RE = re.compile(r"^(\d{6})\.(jpg|jpeg|png)$", re.IGNORECASE)


class SessionFormatError(Exception):
    """Base for recording-format problems; replay aborts on these."""


class MissingManifest(SessionFormatError):
    pass


class MalformedManifest(SessionFormatError):
    pass


class CorruptFrame(SessionFormatError):
    def __init__(self, path: Union[str, Path], reason: str = "") -> None:
        self.path = str(path)
        super().__init__(f"corrupt frame {self.path}" + (f": {reason}" if reason else ""))


class UnsortedTimestamps(SessionFormatError):
    pass


class MalformedRecord(SessionFormatError):
    pass


class EmptySession(SessionFormatError):
    pass


class ProfileError(Exception):
    """Base for user-profile problems."""


class MalformedProfile(ProfileError):
    pass


class EmptyInterests(ProfileError):
    pass


@dataclass(frozen=True)
class GazeSample:
    """One gaze point in normalized frame coordinates."""

    t_ms: int
    x: float
    y: float
    confidence: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.x <= 1.0 and 0.0 <= self.y <= 1.0):
            raise ValueError(f"gaze position out of range: ({self.x}, {self.y})")
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"gaze confidence out of range: {self.confidence}")


@dataclass(frozen=True)
class Frame:
    """One camera frame; image_ref points at the decoded-checked file."""

    t_ms: int
    image_ref: str
    width_px: int
    height_px: int

    def __post_init__(self) -> None:
        if self.width_px <= 0 or self.height_px <= 0:
            raise ValueError("frame dimensions must be positive")


@dataclass(frozen=True)
class QueryRecord:
    """A transcribed user query tied to session time."""

    t_ms: int
    text: str

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError("query text must be non-empty")


@dataclass(frozen=True)
class CameraGeometry:
    """Field of view of the recording camera, in degrees."""

    hfov_deg: float = 139.0
    vfov_deg: float = 83.0

    def __post_init__(self) -> None:
        if self.hfov_deg <= 0 or self.vfov_deg <= 0:
            raise ValueError("field of view must be positive")


@dataclass
class SessionRecording:
    session_id: str
    start_wallclock: str
    location: str
    geometry: CameraGeometry
    fps: float
    frames: list[Frame] = field(default_factory=list)
    gaze: list[GazeSample] = field(default_factory=list)
    queries: list[QueryRecord] = field(default_factory=list)

    @property
    def duration_ms(self) -> int:
        ts = (
            [f.t_ms for f in self.frames]
            + [g.t_ms for g in self.gaze]
            + [q.t_ms for q in self.queries]
        )
        if not ts:
            return 0
        return max(ts) - min(ts)


@dataclass(frozen=True)
class UserProfile:
    """Who the wearer is; drives personalization in the agent prompts."""

    values_interests: tuple[str, ...]
    age: str
    gender: str
    citizenship: str
    residence: str
    education: str
    occupation: str
    preferred_language: str = "en"

    def __post_init__(self) -> None:
        if not self.values_interests:
            raise ValueError("values_interests must be non-empty")


# Merged-stream event wrappers. Ties at equal t_ms order Frame < Gaze < Query.


@dataclass(frozen=True)
class FrameEvent:
    t_ms: int
    frame: Frame


@dataclass(frozen=True)
class GazeEvent:
    t_ms: int
    sample: GazeSample


@dataclass(frozen=True)
class QueryEvent:
    t_ms: int
    query: QueryRecord


SessionEvent = Union[FrameEvent, GazeEvent, QueryEvent]


def frame_time_ms(index: int, fps: float) -> int:
    return round(index * 1000.0 / fps)


def _read_jsonl(path: Path) -> list[dict]:
    if not path.exists():
        return []
    rows = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(f"{path.name}:{lineno}: {exc}") from exc
            if not isinstance(row, dict):
                raise MalformedRecord(f"{path.name}:{lineno}: expected an object")
            rows.append(row)
    return rows


def _check_sorted(ts: list[int], what: str) -> None:
    for a, b in zip(ts, ts[1:]):
        if b < a:
            raise UnsortedTimestamps(f"{what} timestamps go backwards: {a} then {b}")


def load_session(session_dir: Union[str, Path]) -> SessionRecording:
    """Load and validate a recording directory.

    Raises MissingManifest, MalformedManifest, CorruptFrame, MalformedRecord,
    UnsortedTimestamps, or EmptySession. Every frame file is decoded here so
    downstream code can trust dimensions and readability.
    """
    root = Path(session_dir)
    manifest_path = root / MANIFEST_NAME
    if not manifest_path.exists():
        raise MissingManifest(f"no {MANIFEST_NAME} in {root}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise MalformedManifest(str(exc)) from exc

    try:
        session_id = str(manifest["session_id"])
        start_wallclock = str(manifest["start_wallclock"])
        location = str(manifest["location"])
        geom = manifest["geometry"]
        geometry = CameraGeometry(float(geom["hfov_deg"]), float(geom["vfov_deg"]))
        fps = float(manifest["fps"])
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedManifest(f"manifest field problem: {exc}") from exc
    if fps <= 0:
        raise MalformedManifest(f"fps must be positive, got {fps}")
    if not session_id:
        raise MalformedManifest("session_id must be non-empty")

    frames_dir = root / "frames"
    numbered: list[tuple[int, Path]] = []
    if frames_dir.is_dir():
        for p in frames_dir.iterdir():
            m = _FRAME_NAME_RE.match(p.name)
            if m:
                numbered.append((int(m.group(1)), p))
    numbered.sort()
    if not numbered:
        raise EmptySession(f"no frames under {frames_dir}")

    frames: list[Frame] = []
    for order, (index, path) in enumerate(numbered):
        if index != order:
            raise MalformedManifest(
                f"frame numbering has a gap: expected {order:06d}, found {path.name}"
            )
        try:
            with Image.open(path) as img:
                img.load()
                width, height = img.size
        except Exception as exc:
            raise CorruptFrame(path, str(exc)) from exc
        frames.append(Frame(frame_time_ms(index, fps), str(path), width, height))

    gaze: list[GazeSample] = []
    for row in _read_jsonl(root / "gaze.jsonl"):
        try:
            gaze.append(
                GazeSample(int(row["t_ms"]), float(row["x"]), float(row["y"]), float(row["confidence"]))
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedRecord(f"gaze record {row!r}: {exc}") from exc
    _check_sorted([g.t_ms for g in gaze], "gaze")

    queries: list[QueryRecord] = []
    for row in _read_jsonl(root / "queries.jsonl"):
        try:
            queries.append(QueryRecord(int(row["t_ms"]), str(row["text"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedRecord(f"query record {row!r}: {exc}") from exc
    _check_sorted([q.t_ms for q in queries], "queries")

    rec = SessionRecording(
        session_id=session_id,
        start_wallclock=start_wallclock,
        location=location,
        geometry=geometry,
        fps=fps,
        frames=frames,
        gaze=gaze,
        queries=queries,
    )
    if rec.duration_ms <= 0:
        raise EmptySession("session duration must be positive")
    return rec


def save_session(rec: SessionRecording, out_dir: Union[str, Path]) -> Path:
    """Write a recording back to the directory layout; returns the directory.

    Frame files are copied byte-for-byte, so load_session(save_session(rec))
    reproduces the recording.
    """
    root = Path(out_dir)
    (root / "frames").mkdir(parents=True, exist_ok=True)
    manifest = {
        "schema": MANIFEST_SCHEMA,
        "session_id": rec.session_id,
        "start_wallclock": rec.start_wallclock,
        "location": rec.location,
        "geometry": {"hfov_deg": rec.geometry.hfov_deg, "vfov_deg": rec.geometry.vfov_deg},
        "fps": rec.fps,
    }
    (root / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    for index, frame in enumerate(rec.frames):
        src = Path(frame.image_ref)
        shutil.copyfile(src, root / "frames" / f"{index:06d}{src.suffix.lower()}")
    with (root / "gaze.jsonl").open("w", encoding="utf-8") as fh:
        for g in rec.gaze:
            fh.write(json.dumps({"t_ms": g.t_ms, "x": g.x, "y": g.y, "confidence": g.confidence}) + "\n")
    with (root / "queries.jsonl").open("w", encoding="utf-8") as fh:
        for q in rec.queries:
            fh.write(json.dumps({"t_ms": q.t_ms, "text": q.text}) + "\n")
    return root


def load_profile(path: Union[str, Path]) -> UserProfile:
    """Parse a profile file shaped like the structured survey export."""
    p = Path(path)
    try:
        raw = json.loads(p.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise MalformedProfile(str(exc)) from exc
    if not isinstance(raw, dict):
        raise MalformedProfile("profile must be a JSON object")

    interests = raw.get("Values/Interest")
    if interests is None or interests == []:
        raise EmptyInterests("profile needs a non-empty Values/Interest list")
    if not isinstance(interests, list) or not all(isinstance(v, str) and v.strip() for v in interests):
        raise MalformedProfile("Values/Interest must be a list of non-empty strings")

    def _field(key: str) -> str:
        value = raw.get(key)
        if not isinstance(value, str) or not value.strip():
            raise MalformedProfile(f"profile field {key!r} must be a non-empty string")
        return value

    language = raw.get("Preferred Language", "en")
    if not isinstance(language, str) or not language.strip():
        raise MalformedProfile("Preferred Language must be a non-empty string")

    return UserProfile(
        values_interests=tuple(interests),
        age=_field("Age"),
        gender=_field("Gender"),
        citizenship=_field("Citizenship"),
        residence=_field("Residence"),
        education=_field("Education"),
        occupation=_field("Occupation"),
        preferred_language=language,
    )


def save_profile(profile: UserProfile, path: Union[str, Path]) -> Path:
    p = Path(path)
    raw = {
        "Values/Interest": list(profile.values_interests),
        "Age": profile.age,
        "Gender": profile.gender,
        "Citizenship": profile.citizenship,
        "Residence": profile.residence,
        "Education": profile.education,
        "Occupation": profile.occupation,
        "Preferred Language": profile.preferred_language,
    }
    p.write_text(json.dumps(raw, indent=2) + "\n", encoding="utf-8")
    return p


def event_stream(rec: SessionRecording) -> Iterator[SessionEvent]:
    """Merge frames, gaze, and queries into one time-ordered stream.

    The merge is stable and total: len(list(event_stream(rec))) equals the sum
    of the three stream lengths. Ties at the same t_ms yield frame, then gaze,
    then query events.
    """
    events: list[tuple[int, int, int, SessionEvent]] = []
    for i, f in enumerate(rec.frames):
        events.append((f.t_ms, 0, i, FrameEvent(f.t_ms, f)))
    for i, g in enumerate(rec.gaze):
        events.append((g.t_ms, 1, i, GazeEvent(g.t_ms, g)))
    for i, q in enumerate(rec.queries):
        events.append((q.t_ms, 2, i, QueryEvent(q.t_ms, q)))
    events.sort(key=lambda item: item[:3])
    for *_key, ev in events:
        yield ev


def recording_fingerprint(rec: SessionRecording) -> dict:
    """Summary fields used by tests and logs; no image bytes."""
    return {
        "session_id": rec.session_id,
        "frames": len(rec.frames),
        "gaze": len(rec.gaze),
        "queries": len(rec.queries),
        "duration_ms": rec.duration_ms,
    }
