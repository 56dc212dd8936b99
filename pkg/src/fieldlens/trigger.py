"""When to proactively interrupt: scene change, fixation, or user query.

Constant sensing keeps two 16-slot windows of frame embeddings: the rolling
current window and a reference snapshot taken at the last trigger. A scene
change fires when at least ceil(0.8 * 16) = 13 index-aligned pairs disagree
(cosine < 0.6), the current window is full, and at least 12 s have passed
since the last AI-initiated trigger. Fixation triggers share that 12 s
budget; explicit user queries bypass it entirely and leave trigger state
untouched.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .attention import FixationEvent
from .providers.base import DimensionMismatch, unit_norm_error

DEFAULT_INTERVAL_MS = 12000
DEFAULT_WINDOW_SIZE = 16
DEFAULT_SIM_THRESHOLD = 0.6
DEFAULT_CHANGED_FRACTION = 0.8
UNIT_TOLERANCE = 1e-6


class NonUnitEmbedding(Exception):
    pass


class NonMonotonicTime(Exception):
    pass


class EmptyQuery(Exception):
    pass


class TriggerKind(enum.Enum):
    CONSTANT_SENSING = "ConstantSensing"
    FIXATION = "Fixation"
    USER_QUERY = "UserQuery"


@dataclass(frozen=True)
class TriggerEvent:
    kind: TriggerKind
    t_ms: int
    evidence_frames: tuple[int, ...]
    query_text: Optional[str] = None
    fixation: Optional[FixationEvent] = None
    pair_cosines: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if len(self.evidence_frames) > DEFAULT_WINDOW_SIZE:
            raise ValueError("evidence_frames exceeds the window size")
        if (self.query_text is not None) != (self.kind is TriggerKind.USER_QUERY):
            raise ValueError("query_text is exactly for user-query triggers")
        if self.fixation is not None and self.kind is not TriggerKind.FIXATION:
            raise ValueError("fixation payload only belongs to fixation triggers")


@dataclass
class TriggerState:
    """Introspectable snapshot of the engine's windows and timing."""

    last_ai_trigger_ms: Optional[int]
    reference_window: list[tuple[int, np.ndarray]] = field(default_factory=list)
    current_window: list[tuple[int, np.ndarray]] = field(default_factory=list)


class TriggerEngine:
    def __init__(
        self,
        interval_ms: int = DEFAULT_INTERVAL_MS,
        window_size: int = DEFAULT_WINDOW_SIZE,
        sim_threshold: float = DEFAULT_SIM_THRESHOLD,
        changed_fraction: float = DEFAULT_CHANGED_FRACTION,
    ) -> None:
        if not (0.0 < changed_fraction <= 1.0):
            raise ValueError("changed_fraction must be in (0, 1]")
        if window_size < 1:
            raise ValueError("window_size must be at least 1")
        self.interval_ms = interval_ms
        self.window_size = window_size
        self.sim_threshold = sim_threshold
        self.changed_fraction = changed_fraction
        self.required_below = math.ceil(changed_fraction * window_size)
        self._current: list[tuple[int, np.ndarray]] = []
        self._reference: list[tuple[int, np.ndarray]] = []
        self._last_ai_trigger_ms: Optional[int] = None
        self._last_frame_t: Optional[int] = None

    # -- state access -------------------------------------------------

    @property
    def state(self) -> TriggerState:
        return TriggerState(
            last_ai_trigger_ms=self._last_ai_trigger_ms,
            reference_window=list(self._reference),
            current_window=list(self._current),
        )

    def _evidence(self) -> tuple[int, ...]:
        return tuple(t for t, _vec in self._current)

    def _interval_ok(self, t_ms: int) -> bool:
        return (
            self._last_ai_trigger_ms is None
            or t_ms - self._last_ai_trigger_ms >= self.interval_ms
        )

    def _snapshot_reference(self) -> None:
        self._reference = list(self._current)

    # -- inputs -------------------------------------------------------

    def on_frame_embedding(self, t_ms: int, embedding: np.ndarray) -> Optional[TriggerEvent]:
        vec = np.asarray(embedding, dtype=np.float64)
        if unit_norm_error(vec) > UNIT_TOLERANCE:
            raise NonUnitEmbedding(f"norm off by more than {UNIT_TOLERANCE}")
        if self._last_frame_t is not None and t_ms <= self._last_frame_t:
            raise NonMonotonicTime(f"{t_ms} does not advance past {self._last_frame_t}")
        if self._current and vec.shape != self._current[-1][1].shape:
            raise DimensionMismatch(f"{vec.shape} vs {self._current[-1][1].shape}")
        self._last_frame_t = t_ms

        self._current.append((t_ms, vec))
        if len(self._current) > self.window_size:
            self._current.pop(0)
        if len(self._current) < self.window_size:
            return None
        if len(self._reference) < self.window_size:
            # First full window after start (or after a partial-window
            # snapshot) becomes the reference; comparisons begin next frame.
            self._snapshot_reference()
            return None

        cosines = tuple(
            float(np.dot(cur_vec, ref_vec))
            for (_ct, cur_vec), (_rt, ref_vec) in zip(self._current, self._reference)
        )
        below = sum(1 for c in cosines if c < self.sim_threshold)
        if below < self.required_below or not self._interval_ok(t_ms):
            return None

        event = TriggerEvent(
            kind=TriggerKind.CONSTANT_SENSING,
            t_ms=t_ms,
            evidence_frames=self._evidence(),
            pair_cosines=cosines,
        )
        self._last_ai_trigger_ms = t_ms
        self._snapshot_reference()
        return event

    def on_fixation(self, fixation: FixationEvent) -> Optional[TriggerEvent]:
        t_ms = fixation.end_ms
        if not self._interval_ok(t_ms):
            return None
        event = TriggerEvent(
            kind=TriggerKind.FIXATION,
            t_ms=t_ms,
            evidence_frames=self._evidence(),
            fixation=fixation,
        )
        self._last_ai_trigger_ms = t_ms
        self._snapshot_reference()
        return event

    def on_user_query(self, text: str, t_ms: int) -> TriggerEvent:
        if not text or not text.strip():
            raise EmptyQuery("query text must be non-empty")
        # Queries never touch the AI-trigger interval or the reference
        # window; asking a question should not silence proactive delivery.
        return TriggerEvent(
            kind=TriggerKind.USER_QUERY,
            t_ms=t_ms,
            evidence_frames=self._evidence(),
            query_text=text,
        )
