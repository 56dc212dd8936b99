"""The run loop: session events in, prioritized knowledge deliveries out.

Replay drives a virtual clock straight from event timestamps; the live
service wraps the same loop with a pacer and a button queue. Provider
calls cost zero virtual time, so replays of the same inputs are
bit-identical. All control flow honors the physical buttons: Up cancels
the latest delivery, Left mutes audio, Bottom pauses the whole proactive
machine (queries still work), Right asks an explicit question.
"""

from __future__ import annotations

import bisect
import enum
import threading
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from . import agents
from .agents import (
    AgentExchange,
    ImageReference,
    KnowledgeCandidate,
    NoCandidates,
    ParseError,
    SelectedItem,
    TransformedItem,
)
from .attention import FixationDetector, OutOfOrderSample
from .config import EngineConfig
from .history import HistoryEntry, HistoryStore
from .providers.base import (
    ChatProvider,
    Embedder,
    EmptyInput,
    ProviderUnavailable,
    RateLimited,
    SafetyBlocked,
)
from .session import (
    Frame,
    FrameEvent,
    GazeEvent,
    QueryEvent,
    SessionFormatError,
    SessionRecording,
    UserProfile,
    event_stream,
)
from .trigger import TriggerEngine, TriggerEvent, TriggerKind

TRACE_SCHEMA = "trace/1"
DELIVERY_SCHEMA = "delivery/1"


class Button(enum.Enum):
    UP = "Up"
    LEFT = "Left"
    BOTTOM = "Bottom"
    RIGHT = "Right"


@dataclass(frozen=True)
class ButtonEvent:
    button: Button
    t_ms: int
    query_text: Optional[str] = None

    def __post_init__(self) -> None:
        if self.button is Button.RIGHT:
            if not self.query_text or not self.query_text.strip():
                raise ValueError("Right presses carry the transcribed query text")
        elif self.query_text is not None:
            raise ValueError("only Right presses carry query text")


@dataclass
class ControlState:
    system_on: bool = True
    muted: bool = False
    active_delivery: Optional[str] = None


@dataclass
class DeliveryItem:
    candidate: KnowledgeCandidate
    transformed: TransformedItem
    image: Optional[ImageReference]
    max_history_sim: float
    affinity: int


@dataclass
class DeliveryRecord:
    id: str
    trigger_kind: TriggerKind
    trigger_t_ms: int
    items: list[DeliveryItem]
    delivered_at_ms: int
    canceled: bool = False
    audio_suppressed: bool = False


@dataclass(frozen=True)
class SessionMetrics:
    duration_min: float
    ai_initiated_count: int
    cancel_count: int
    user_query_count: int

    @property
    def deliveries_per_minute(self) -> float:
        return self.ai_initiated_count / self.duration_min

    def to_dict(self) -> dict:
        return {
            "schema": "metrics/1",
            "duration_min": self.duration_min,
            "ai_initiated_count": self.ai_initiated_count,
            "cancel_count": self.cancel_count,
            "user_query_count": self.user_query_count,
            "deliveries_per_minute": self.deliveries_per_minute,
        }


@dataclass(frozen=True)
class ProviderSet:
    fast: ChatProvider
    strong: ChatProvider
    embedder: Embedder


@dataclass
class RunResult:
    deliveries: list[DeliveryRecord]
    metrics: SessionMetrics
    trace: list[dict]


def _frame_file(frame: Frame) -> str:
    return "frames/" + frame.image_ref.replace("\\", "/").rsplit("/", 1)[-1]


def _box_dict(box) -> dict:
    return {
        "entity": box.entity,
        "x": box.x,
        "y": box.y,
        "w": box.w,
        "h": box.h,
        "clamped": box.clamped,
    }


def delivery_to_dict(record: DeliveryRecord, frame_files: dict[int, str]) -> dict:
    items = []
    for item in record.items:
        cand = item.candidate
        row = {
            "content": cand.content,
            "knowledge_type": cand.knowledge_type.value,
            "entities": list(cand.entities),
            "factors": None
            if cand.factors is None
            else {name: getattr(cand.factors, name) for name in agents.FACTOR_NAMES},
            "factor_reasoning": None
            if cand.factor_reasoning is None
            else {name: text for name, text in cand.factor_reasoning},
            "total": cand.total,
            "max_history_sim": item.max_history_sim,
            "affinity": item.affinity,
            "keyword_emoji_pairs": [list(p) for p in item.transformed.keyword_emoji_pairs],
            "voiceover_text": item.transformed.voiceover_text,
            "image": None
            if item.image is None
            else {
                "chosen_frame_t_ms": item.image.chosen_frame_t_ms,
                "frame_file": frame_files.get(item.image.chosen_frame_t_ms),
                "boxes": [_box_dict(b) for b in item.image.boxes],
            },
        }
        items.append(row)
    return {
        "schema": DELIVERY_SCHEMA,
        "id": record.id,
        "trigger_kind": record.trigger_kind.value,
        "trigger_t_ms": record.trigger_t_ms,
        "delivered_at_ms": record.delivered_at_ms,
        "canceled": record.canceled,
        "audio_suppressed": record.audio_suppressed,
        "items": items,
    }


def compute_metrics(
    deliveries: Sequence[DeliveryRecord], trace: Sequence[dict], duration_ms: int
) -> SessionMetrics:
    if duration_ms <= 0:
        raise ValueError("metrics need a positive session duration")
    ai_initiated = sum(1 for d in deliveries if d.trigger_kind is not TriggerKind.USER_QUERY)
    cancels = sum(1 for d in deliveries if d.canceled)
    queries = sum(
        1
        for ev in trace
        if ev.get("type") == "Trigger" and ev.get("kind") == TriggerKind.USER_QUERY.value
    )
    return SessionMetrics(
        duration_min=duration_ms / 60000.0,
        ai_initiated_count=ai_initiated,
        cancel_count=cancels,
        user_query_count=queries,
    )


class Orchestrator:
    """One session's engine instance; not reusable across runs."""

    def __init__(
        self,
        recording: SessionRecording,
        profile: UserProfile,
        config: EngineConfig,
        providers: ProviderSet,
        history: Optional[HistoryStore] = None,
        run_id: str = "run",
        on_event: Optional[Callable[[dict], None]] = None,
        pacer: Optional[Callable[[int], None]] = None,
        button_poll: Optional[Callable[[], list[ButtonEvent]]] = None,
        async_jobs: bool = False,
    ) -> None:
        config.validate()
        self.recording = recording
        self.profile = profile
        self.config = config
        self.providers = providers
        self.history = history if history is not None else HistoryStore()
        self.run_id = run_id
        self.control = ControlState()
        self.deliveries: list[DeliveryRecord] = []
        self.trace: list[dict] = []
        self._on_event = on_event
        self._pacer = pacer
        self._button_poll = button_poll
        self._lock = threading.RLock()
        self._async_jobs = async_jobs
        self._executor = ThreadPoolExecutor(max_workers=1) if async_jobs else None
        self._job: Optional[Future] = None
        self._trigger_engine = TriggerEngine(
            interval_ms=config.interval_ms,
            window_size=config.window_size,
            sim_threshold=config.sim_threshold,
            changed_fraction=config.changed_fraction,
        )
        self._detector = FixationDetector(
            geometry=recording.geometry,
            max_dispersion_deg=config.max_dispersion_deg,
            min_duration_ms=config.min_fixation_ms,
            min_confidence=config.min_gaze_confidence,
        )
        self._sample_period_ms = 1000.0 / config.sample_hz
        self._next_sample_ms: Optional[float] = None
        self._frames_by_t: dict[int, Frame] = {}
        self._gaze_seen: list = []
        self._gaze_times: list[int] = []
        self._current_t = 0
        self._delivery_seq = 0
        self._finished = False

    # -- event plumbing ----------------------------------------------

    def _emit(self, event_type: str, **fields) -> None:
        event = {"schema": TRACE_SCHEMA, "type": event_type, "t_ms": self._current_t}
        event.update(fields)
        with self._lock:
            self.trace.append(event)
            if self._on_event is not None:
                self._on_event(event)

    @property
    def current_t_ms(self) -> int:
        """Virtual clock position; advances with the event stream."""
        with self._lock:
            return self._current_t

    # -- control -----------------------------------------------------

    def handle_button(self, ev: ButtonEvent) -> None:
        """Apply one button press; safe to call from other threads."""
        with self._lock:
            self._current_t = max(self._current_t, ev.t_ms)
            if ev.button is Button.UP:
                target = self.control.active_delivery
                if target is None:
                    self._emit("ButtonPressed", button=ev.button.value, effect="ignored")
                    return
                record = next(d for d in self.deliveries if d.id == target)
                record.canceled = True
                self.control.active_delivery = None
                self._emit("ButtonPressed", button=ev.button.value, effect=f"canceled {target}")
                self._emit("Canceled", delivery_id=target)
            elif ev.button is Button.LEFT:
                self.control.muted = not self.control.muted
                self._emit(
                    "ButtonPressed",
                    button=ev.button.value,
                    effect="muted" if self.control.muted else "unmuted",
                )
                self._emit_state()
            elif ev.button is Button.BOTTOM:
                self.control.system_on = not self.control.system_on
                self._emit(
                    "ButtonPressed",
                    button=ev.button.value,
                    effect="system_on" if self.control.system_on else "system_off",
                )
                if self.control.system_on and self.config.reset_window_on_resume:
                    self._trigger_engine = TriggerEngine(
                        interval_ms=self.config.interval_ms,
                        window_size=self.config.window_size,
                        sim_threshold=self.config.sim_threshold,
                        changed_fraction=self.config.changed_fraction,
                    )
                    self._detector = FixationDetector(
                        geometry=self.recording.geometry,
                        max_dispersion_deg=self.config.max_dispersion_deg,
                        min_duration_ms=self.config.min_fixation_ms,
                        min_confidence=self.config.min_gaze_confidence,
                    )
                self._emit_state()
            else:  # RIGHT
                self._emit("ButtonPressed", button=ev.button.value, effect="query")
                self._on_query_text(ev.query_text, ev.t_ms)

    def _emit_state(self) -> None:
        self._emit(
            "StateChanged",
            system_on=self.control.system_on,
            muted=self.control.muted,
        )

    # -- sensing path ------------------------------------------------

    def _overlay_centers(self, frame_t: int) -> list[tuple[float, float]]:
        tol = self.config.overlay_tolerance_ms
        lo = bisect.bisect_left(self._gaze_times, frame_t - tol)
        hi = bisect.bisect_right(self._gaze_times, frame_t + tol)
        near = sorted(
            ((abs(s.t_ms - frame_t), i, s) for i, s in enumerate(self._gaze_seen[lo:hi])),
            key=lambda item: item[:2],
        )
        return [(s.x, s.y) for _d, _i, s in near[: self.config.overlay_max_points]]

    def _on_frame(self, frame: Frame) -> None:
        self._emit(
            "FrameTick",
            frame_file=_frame_file(frame),
            frame_t_ms=frame.t_ms,
            circles=self._overlay_centers(frame.t_ms),
        )
        if not self.control.system_on:
            return
        if self._next_sample_ms is not None and frame.t_ms < self._next_sample_ms:
            return
        try:
            embedding = self._embed_with_retry(frame)
        except (ProviderUnavailable, RateLimited, EmptyInput) as exc:
            self._emit("ProviderError", stage="frame_embedding", error=type(exc).__name__)
            return
        self._next_sample_ms = frame.t_ms + self._sample_period_ms
        self._frames_by_t[frame.t_ms] = frame
        trigger = self._trigger_engine.on_frame_embedding(frame.t_ms, embedding)
        if trigger is not None:
            self._dispatch_trigger(trigger)

    def _embed_with_retry(self, frame: Frame):
        try:
            return self.providers.embedder.embed_image(frame.image_ref)
        except (ProviderUnavailable, RateLimited) as exc:
            self._emit(
                "ProviderError", stage="frame_embedding", error=type(exc).__name__, retrying=True
            )
            return self.providers.embedder.embed_image(frame.image_ref)

    def _on_gaze(self, sample) -> None:
        self._gaze_seen.append(sample)
        self._gaze_times.append(sample.t_ms)
        if not self.control.system_on:
            return
        fixation = self._detector.push_gaze(sample)
        if fixation is not None:
            trigger = self._trigger_engine.on_fixation(fixation)
            if trigger is not None:
                self._dispatch_trigger(trigger)

    def _on_query_text(self, text: str, t_ms: int) -> None:
        trigger = self._trigger_engine.on_user_query(text, t_ms)
        self._dispatch_trigger(trigger)

    # -- agent pipeline ----------------------------------------------

    def _dispatch_trigger(self, trigger: TriggerEvent) -> None:
        self._emit(
            "Trigger",
            kind=trigger.kind.value,
            trigger_t_ms=trigger.t_ms,
            evidence_frames=list(trigger.evidence_frames),
        )
        if self._async_jobs:
            with self._lock:
                if self._job is not None and not self._job.done():
                    self._emit("Suppressed", kind=trigger.kind.value, reason="job_in_flight")
                    return
                assert self._executor is not None
                self._job = self._executor.submit(self._run_pipeline_guarded, trigger)
        else:
            self._run_pipeline_guarded(trigger)

    def _run_pipeline_guarded(self, trigger: TriggerEvent) -> None:
        try:
            self._run_pipeline(trigger)
        except NoCandidates:
            self._emit("NoDelivery", reason="no_candidates", kind=trigger.kind.value)
        except ParseError as exc:
            self._emit("NoDelivery", reason="parse_error", kind=trigger.kind.value, detail=str(exc))
        except SafetyBlocked:
            self._emit("NoDelivery", reason="safety_blocked", kind=trigger.kind.value)
        except (ProviderUnavailable, RateLimited) as exc:
            self._emit(
                "NoDelivery",
                reason="provider_error",
                kind=trigger.kind.value,
                detail=type(exc).__name__,
            )

    def _call_with_retry(self, stage: str, fn, *args, **kwargs):
        """One retry for transport-level failures; safety blocks never retry."""
        try:
            return fn(*args, **kwargs)
        except (ProviderUnavailable, RateLimited) as exc:
            self._emit("ProviderError", stage=stage, error=type(exc).__name__, retrying=True)
            return fn(*args, **kwargs)

    def _trace_exchanges(self, exchanges: Sequence[AgentExchange]) -> None:
        for ex in exchanges:
            self._emit(
                "PromptIssued",
                stage=ex.stage,
                prompt=ex.prompt,
                response_chars=len(ex.response),
                images=len(ex.image_refs),
                retried=ex.retried,
            )

    def _evidence_frames(self, trigger: TriggerEvent) -> list[Frame]:
        return [self._frames_by_t[t] for t in trigger.evidence_frames if t in self._frames_by_t]

    def _best_frame(self, trigger: TriggerEvent, evidence: Sequence[Frame]) -> Optional[Frame]:
        if not evidence:
            return None
        return min(evidence, key=lambda f: (abs(f.t_ms - trigger.t_ms), f.t_ms))

    def _run_pipeline(self, trigger: TriggerEvent) -> None:
        config = self.config
        evidence = self._evidence_frames(trigger)
        overlays = [(frame, tuple(self._overlay_centers(frame.t_ms))) for frame in evidence]
        wallclock = agents.wallclock_at(self.recording.start_wallclock, trigger.t_ms)

        ctx, exchanges = self._call_with_retry(
            "context_analysis",
            agents.analyze_context,
            self.providers.fast,
            trigger,
            overlays,
            wallclock,
            self.recording.location,
            self.profile,
            config.variant,
        )
        self._trace_exchanges(exchanges)
        self._emit(
            "ContextReady",
            gaze_mode=ctx.gaze_mode.value,
            activity=ctx.activity,
            primary_entities=list(ctx.primary_entities),
            peripheral_entities=list(ctx.peripheral_entities),
        )

        retrieval_text = ", ".join(
            list(ctx.primary_entities) + list(ctx.peripheral_entities) + [ctx.activity]
        )
        top = self.history.top_k(
            self.providers.embedder.embed_text(retrieval_text), config.history_top_k
        )
        top_entries = [entry for entry, _score in top]

        candidates, exchanges = self._call_with_retry(
            "knowledge_generation",
            agents.generate_candidates,
            self.providers.strong,
            ctx,
            self._best_frame(trigger, evidence),
            top_entries,
            self.profile,
            config.variant,
            trigger.query_text,
        )
        self._trace_exchanges(exchanges)

        selected = agents.score_filter_select(
            candidates,
            ctx,
            self.history,
            self.providers.embedder,
            min_total=config.min_total,
            novelty_mandatory=config.novelty_mandatory,
            dedup_threshold=config.dedup_threshold,
            max_items=config.max_items,
        )
        if not selected:
            self._emit("NoDelivery", reason="all_filtered", kind=trigger.kind.value)
            return

        language = config.language_override or self.profile.preferred_language
        transformed, image_ref, exchanges = self._call_with_retry(
            "presentation",
            agents.run_presentation_stage,
            self.providers.fast,
            selected,
            language,
            evidence,
        )
        self._trace_exchanges(exchanges)
        self._finish_delivery(trigger, selected, transformed, image_ref)

    def _finish_delivery(
        self,
        trigger: TriggerEvent,
        selected: Sequence[SelectedItem],
        transformed: Sequence[TransformedItem],
        image_ref: Optional[ImageReference],
    ) -> None:
        with self._lock:
            # Explicit queries deliver even while the proactive side is off;
            # only AI-initiated output is gated on system_on.
            displayed = self.control.system_on or trigger.kind is TriggerKind.USER_QUERY
            self._delivery_seq += 1
            delivery_id = f"d{self._delivery_seq:04d}"
            delivered_at = max(trigger.t_ms, self._current_t) if self._async_jobs else trigger.t_ms
            record = DeliveryRecord(
                id=delivery_id,
                trigger_kind=trigger.kind,
                trigger_t_ms=trigger.t_ms,
                items=[
                    DeliveryItem(
                        candidate=sel.candidate,
                        transformed=out,
                        image=image_ref,
                        max_history_sim=sel.max_history_sim,
                        affinity=sel.affinity,
                    )
                    for sel, out in zip(selected, transformed)
                ],
                delivered_at_ms=delivered_at,
                canceled=not displayed,
                audio_suppressed=self.control.muted,
            )
            # Even a never-displayed item enters history; it was generated,
            # and near-duplicates of it should stay suppressed.
            for k, sel in enumerate(selected, start=1):
                self.history.add(
                    HistoryEntry(
                        id=f"{self.run_id}/{delivery_id}/i{k}",
                        content=sel.candidate.content,
                        embedding=sel.embedding,
                        entities=sel.candidate.entities,
                        session_id=self.recording.session_id,
                        t_ms=delivered_at,
                        delivered=displayed,
                    )
                )
            if not displayed:
                self._emit("DeliveryDropped", reason="system_off", delivery_id=delivery_id)
                return
            self.deliveries.append(record)
            self.control.active_delivery = delivery_id
            frame_files = {t: _frame_file(f) for t, f in self._frames_by_t.items()}
            self._emit("Delivery", delivery=delivery_to_dict(record, frame_files))

    # -- the loop ----------------------------------------------------

    def run(self, buttons: Sequence[ButtonEvent] = ()) -> RunResult:
        if self._finished:
            raise RuntimeError("an orchestrator instance runs exactly once")
        self._finished = True
        rec = self.recording
        self._emit(
            "RunStarted",
            run_id=self.run_id,
            session_id=rec.session_id,
            variant=self.config.variant.value,
            duration_ms=rec.duration_ms,
            frames=len(rec.frames),
        )
        self._emit_state()

        merged: list[tuple[int, int, int, object]] = []
        for seq, ev in enumerate(event_stream(rec)):
            rank = {FrameEvent: 0, GazeEvent: 1, QueryEvent: 2}[type(ev)]
            merged.append((ev.t_ms, rank, seq, ev))
        for seq, bev in enumerate(buttons):
            # Button presses at a given timestamp apply before sensor events
            # at that same timestamp: control precedes sensing.
            merged.append((bev.t_ms, -1, seq, bev))
        merged.sort(key=lambda item: item[:3])

        try:
            for t_ms, _rank, _seq, ev in merged:
                self._drain_buttons()
                if self._pacer is not None:
                    self._pacer(t_ms)
                self._current_t = max(self._current_t, t_ms)
                if isinstance(ev, ButtonEvent):
                    self.handle_button(ev)
                elif isinstance(ev, FrameEvent):
                    self._on_frame(ev.frame)
                elif isinstance(ev, GazeEvent):
                    self._on_gaze(ev.sample)
                else:
                    assert isinstance(ev, QueryEvent)
                    self._on_query_text(ev.query.text, ev.t_ms)
            if self.control.system_on:
                tail = self._detector.finish()
                if tail is not None:
                    trigger = self._trigger_engine.on_fixation(tail)
                    if trigger is not None:
                        self._dispatch_trigger(trigger)
            self._drain_buttons()
        except OutOfOrderSample as exc:
            raise SessionFormatError(str(exc)) from exc
        finally:
            if self._job is not None:
                self._job.result()
            if self._executor is not None:
                self._executor.shutdown(wait=True)

        metrics = compute_metrics(self.deliveries, self.trace, rec.duration_ms)
        self._current_t = max(self._current_t, rec.duration_ms)
        self._emit("Metrics", metrics=metrics.to_dict())
        self._emit("RunFinished", deliveries=len(self.deliveries))
        return RunResult(deliveries=self.deliveries, metrics=metrics, trace=self.trace)

    def _drain_buttons(self) -> None:
        if self._button_poll is None:
            return
        for bev in self._button_poll():
            self.handle_button(bev)


def run_replay(
    recording: SessionRecording,
    profile: UserProfile,
    config: EngineConfig,
    providers: ProviderSet,
    history: Optional[HistoryStore] = None,
    buttons: Sequence[ButtonEvent] = (),
    run_id: str = "run",
    on_event: Optional[Callable[[dict], None]] = None,
) -> RunResult:
    """Deterministic offline replay of a whole recording."""
    orchestrator = Orchestrator(
        recording=recording,
        profile=profile,
        config=config,
        providers=providers,
        history=history,
        run_id=run_id,
        on_event=on_event,
    )
    return orchestrator.run(buttons=buttons)
