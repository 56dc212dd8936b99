"""Fixation detection and gaze-overlay selection.

Dispersion of a gaze window is measured in approximate visual degrees by
scaling the normalized bounding box with the camera field of view:

    dispersion = (max_x - min_x) * hfov_deg + (max_y - min_y) * vfov_deg

A fixation is a maximal run of samples whose dispersion stays at or below
the threshold for at least the minimum duration. Low-confidence samples are
dropped before detection and neither extend nor break a window.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from .session import CameraGeometry, Frame, GazeSample

DEFAULT_MAX_DISPERSION_DEG = 4.91
DEFAULT_MIN_DURATION_MS = 1000
DEFAULT_MIN_CONFIDENCE = 0.6
DEFAULT_OVERLAY_TOLERANCE_MS = 50
DEFAULT_OVERLAY_MAX_POINTS = 3


class EmptyWindow(Exception):
    pass


class OutOfOrderSample(Exception):
    pass


@dataclass(frozen=True)
class FixationEvent:
    start_ms: int
    end_ms: int
    centroid: tuple[float, float]
    dispersion_deg: float

    @property
    def duration_ms(self) -> int:
        return self.end_ms - self.start_ms


@dataclass(frozen=True)
class GazeOverlay:
    """Gaze circle centers chosen for one frame, nearest in time first."""

    t_ms: int
    circle_centers: tuple[tuple[float, float], ...]


def dispersion_deg(samples: Sequence[GazeSample], geometry: CameraGeometry) -> float:
    if not samples:
        raise EmptyWindow("dispersion needs at least one sample")
    xs = [s.x for s in samples]
    ys = [s.y for s in samples]
    return (max(xs) - min(xs)) * geometry.hfov_deg + (max(ys) - min(ys)) * geometry.vfov_deg


class FixationDetector:
    """Streaming dispersion-threshold detector.

    push_gaze consumes samples in time order and emits a FixationEvent when a
    qualifying window breaks; finish() closes any window still open at stream
    end. Output is invariant to how the stream is chunked because all state
    lives in the current window.
    """

    def __init__(
        self,
        geometry: CameraGeometry,
        max_dispersion_deg: float = DEFAULT_MAX_DISPERSION_DEG,
        min_duration_ms: int = DEFAULT_MIN_DURATION_MS,
        min_confidence: float = DEFAULT_MIN_CONFIDENCE,
    ) -> None:
        self.geometry = geometry
        self.max_dispersion_deg = max_dispersion_deg
        self.min_duration_ms = min_duration_ms
        self.min_confidence = min_confidence
        self._window: list[GazeSample] = []
        self._last_t: Optional[int] = None

    def _emit(self, window: Sequence[GazeSample]) -> FixationEvent:
        cx = sum(s.x for s in window) / len(window)
        cy = sum(s.y for s in window) / len(window)
        return FixationEvent(
            start_ms=window[0].t_ms,
            end_ms=window[-1].t_ms,
            centroid=(cx, cy),
            dispersion_deg=dispersion_deg(window, self.geometry),
        )

    def push_gaze(self, sample: GazeSample) -> Optional[FixationEvent]:
        # Confidence gating happens before any other handling so that
        # pre-filtering the stream and detecting are interchangeable.
        if sample.confidence < self.min_confidence:
            return None
        if self._last_t is not None and sample.t_ms < self._last_t:
            raise OutOfOrderSample(f"{sample.t_ms} after {self._last_t}")
        self._last_t = sample.t_ms

        if dispersion_deg(self._window + [sample], self.geometry) <= self.max_dispersion_deg:
            self._window.append(sample)
            return None

        event: Optional[FixationEvent] = None
        window = self._window
        if window and window[-1].t_ms - window[0].t_ms >= self.min_duration_ms:
            event = self._emit(window)
            self._window = [sample]
        else:
            # Window too short to report; slide its start until the new
            # sample fits so the window stays maximal for its right edge.
            window.append(sample)
            while dispersion_deg(window, self.geometry) > self.max_dispersion_deg:
                window.pop(0)
        return event

    def finish(self) -> Optional[FixationEvent]:
        window = self._window
        self._window = []
        self._last_t = None
        if window and window[-1].t_ms - window[0].t_ms >= self.min_duration_ms:
            return self._emit(window)
        return None


def detect_fixations(
    samples: Sequence[GazeSample],
    geometry: CameraGeometry,
    max_dispersion_deg: float = DEFAULT_MAX_DISPERSION_DEG,
    min_duration_ms: int = DEFAULT_MIN_DURATION_MS,
    min_confidence: float = DEFAULT_MIN_CONFIDENCE,
) -> list[FixationEvent]:
    """Run the streaming detector over a whole sample list."""
    detector = FixationDetector(geometry, max_dispersion_deg, min_duration_ms, min_confidence)
    events = []
    for sample in samples:
        ev = detector.push_gaze(sample)
        if ev is not None:
            events.append(ev)
    tail = detector.finish()
    if tail is not None:
        events.append(tail)
    return events


def overlay_for_frames(
    frames: Sequence[Frame],
    gaze: Sequence[GazeSample],
    tolerance_ms: int = DEFAULT_OVERLAY_TOLERANCE_MS,
    max_points: int = DEFAULT_OVERLAY_MAX_POINTS,
) -> list[GazeOverlay]:
    """Pick up to max_points gaze samples within tolerance of each frame.

    Samples are ordered nearest-in-time first; ties keep stream order. Frames
    with no sample in range get an empty overlay.
    """
    overlays = []
    for frame in frames:
        near = [
            (abs(s.t_ms - frame.t_ms), i, s)
            for i, s in enumerate(gaze)
            if abs(s.t_ms - frame.t_ms) <= tolerance_ms
        ]
        near.sort(key=lambda item: item[:2])
        centers = tuple((s.x, s.y) for _d, _i, s in near[:max_points])
        overlays.append(GazeOverlay(t_ms=frame.t_ms, circle_centers=centers))
    return overlays
