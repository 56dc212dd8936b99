"""The agent pipeline: context analysis, knowledge generation, selection,
and the two concurrent presentation agents.

Prompts are versioned text assets with named substitution slots; assembly
is deterministic down to the byte so variant differences are provable.
Model replies must arrive as one fenced block tagged with the expected
schema id; a malformed reply earns exactly one reformat retry before
ParseError.
"""

from __future__ import annotations

import enum
import json
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timedelta
from importlib import resources
from string import Template
from typing import Optional, Sequence

import numpy as np

from .history import HistoryEntry, HistoryStore
from .providers.base import ChatProvider, ChatRequest, Embedder, ImagePart, TextPart, Tier
from .session import Frame, UserProfile
from .trigger import TriggerEvent, TriggerKind

PROMPT_VERSION = "v1"

CONTEXT_FORMAT = "context/1"
CANDIDATES_FORMAT = "candidates/1"
CANDIDATES_PLAIN_FORMAT = "candidates_plain/1"
TRANSFORM_FORMAT = "transform/1"
IMAGE_REF_FORMAT = "image_ref/1"

NOTHING_SENTINEL = "NOTHING"
FACTOR_NAMES = ("novelty", "interest_alignment", "usefulness", "unexpectedness")

# Structural markers the variant tests key on: the rules block exists only
# in the full generation template, the profile block only when a profile is
# included.
RULES_MARKER = "Rules for choosing what to offer:"
PROFILE_MARKER = "User profile:"

DEFAULT_MIN_TOTAL = 2
DEFAULT_DEDUP_THRESHOLD = 0.75
DEFAULT_MAX_ITEMS = 2
MAX_CONTENT_SENTENCES = 2

_SENTENCE_END_RE = re.compile(r"[.!?](?:\s|$)")


class ParseError(Exception):
    pass


class NoCandidates(Exception):
    """The model explicitly decided this moment deserves nothing."""


class PipelineVariant(enum.Enum):
    FULL = "full"
    NO_RULES = "bl-wo-r"
    NO_RULES_NO_PROFILE = "bl-wo-rp"


class GazeMode(enum.Enum):
    SACCADE = "Saccade"
    QUICK_BROWSE = "QuickBrowse"
    FOCUSED = "Focused"


class KnowledgeType(enum.Enum):
    FACTUAL = "Factual"
    CONCEPTUAL = "Conceptual"
    PROCEDURAL = "Procedural"


@dataclass(frozen=True)
class FactorScores:
    novelty: int
    interest_alignment: int
    usefulness: int
    unexpectedness: int

    def __post_init__(self) -> None:
        for name in FACTOR_NAMES:
            value = getattr(self, name)
            if type(value) is not int or value not in (0, 1):
                raise ValueError(f"factor {name} must be 0 or 1, got {value!r}")

    @property
    def total(self) -> int:
        return self.novelty + self.interest_alignment + self.usefulness + self.unexpectedness


@dataclass(frozen=True)
class ContextDescription:
    activity: str
    gaze_mode: GazeMode
    primary_entities: tuple[str, ...]
    peripheral_entities: tuple[str, ...]
    predicted_desires: tuple[str, ...]
    familiarity_notes: tuple[tuple[str, str], ...]
    raw_text: str


@dataclass(frozen=True)
class KnowledgeCandidate:
    content: str
    knowledge_type: KnowledgeType
    entities: tuple[str, ...]
    factors: Optional[FactorScores]
    factor_reasoning: Optional[tuple[tuple[str, str], ...]]
    emitted_index: int

    def __post_init__(self) -> None:
        if not self.content.strip():
            raise ValueError("candidate content must be non-empty")

    @property
    def total(self) -> int:
        # Recomputed from factors, never trusted from provider arithmetic.
        return self.factors.total if self.factors is not None else -1


@dataclass(frozen=True)
class TransformedItem:
    keyword_emoji_pairs: tuple[tuple[str, str], ...]
    voiceover_text: str

    def __post_init__(self) -> None:
        if not self.keyword_emoji_pairs:
            raise ValueError("at least one keyword/emoji pair is required")
        if not self.voiceover_text.strip():
            raise ValueError("voiceover text must be non-empty")


@dataclass(frozen=True)
class BoundingBox:
    entity: str
    x: float
    y: float
    w: float
    h: float
    clamped: bool = False

    def __post_init__(self) -> None:
        if not (0 <= self.x <= 1 and 0 <= self.y <= 1):
            raise ValueError("box origin out of range")
        if self.w <= 0 or self.h <= 0:
            raise ValueError("box extent must be positive")
        if self.x + self.w > 1 + 1e-9 or self.y + self.h > 1 + 1e-9:
            raise ValueError("box must stay inside the unit square")


@dataclass(frozen=True)
class ImageReference:
    chosen_frame_t_ms: int
    boxes: tuple[BoundingBox, ...]


@dataclass(frozen=True)
class SelectedItem:
    candidate: KnowledgeCandidate
    embedding: np.ndarray
    max_history_sim: float
    affinity: int


@dataclass(frozen=True)
class AgentExchange:
    """One provider round-trip, kept for prompt traces."""

    stage: str
    prompt: str
    response: str
    image_refs: tuple[str, ...] = ()
    retried: bool = False


# -- prompt assembly ----------------------------------------------------


def _load_template(name: str) -> Template:
    text = (resources.files("fieldlens") / "prompts" / f"{name}_{PROMPT_VERSION}.txt").read_text(
        encoding="utf-8"
    )
    return Template(text)


def wallclock_at(start_wallclock: str, t_ms: int) -> str:
    try:
        start = datetime.fromisoformat(start_wallclock.replace("Z", "+00:00"))
    except ValueError:
        return f"{start_wallclock} + {t_ms} ms"
    return (start + timedelta(milliseconds=t_ms)).isoformat()


def _profile_section(profile: Optional[UserProfile]) -> str:
    if profile is None:
        return ""
    lines = [
        PROFILE_MARKER,
        "- Values and interests: " + ", ".join(profile.values_interests),
        "- Age: " + profile.age,
        "- Gender: " + profile.gender,
        "- Citizenship: " + profile.citizenship,
        "- Residence: " + profile.residence,
        "- Education: " + profile.education,
        "- Occupation: " + profile.occupation,
        "- Preferred language: " + profile.preferred_language,
    ]
    return "\n".join(lines) + "\n\n"


def _trigger_section(trigger: TriggerEvent) -> str:
    if trigger.kind is TriggerKind.CONSTANT_SENSING:
        return "the camera scene changed substantially (constant sensing)."
    if trigger.kind is TriggerKind.FIXATION:
        fx = trigger.fixation
        if fx is None:
            return "the user's gaze fixated on something."
        return (
            f"the user's gaze fixated for {fx.duration_ms} ms "
            f"around ({fx.centroid[0]:.3f}, {fx.centroid[1]:.3f}) in the frame."
        )
    return f'the user asked: "{trigger.query_text}"'


def build_context_prompt(
    trigger: TriggerEvent,
    wallclock: str,
    location: str,
    profile: Optional[UserProfile],
    variant: PipelineVariant,
) -> str:
    if variant is PipelineVariant.NO_RULES_NO_PROFILE:
        profile = None
    return _load_template("context_analysis").substitute(
        wallclock=wallclock,
        location=location,
        trigger_section=_trigger_section(trigger),
        profile_section=_profile_section(profile),
    )


def _context_block(ctx: ContextDescription) -> str:
    familiarity = "; ".join(f"{name}: {level}" for name, level in ctx.familiarity_notes) or "(none)"
    return "\n".join(
        [
            "Context analysis:",
            "- Activity: " + ctx.activity,
            "- Gaze pattern: " + ctx.gaze_mode.value,
            "- Primary entities: " + (", ".join(ctx.primary_entities) or "(none)"),
            "- Peripheral entities: " + (", ".join(ctx.peripheral_entities) or "(none)"),
            "- Predicted desires: " + (", ".join(ctx.predicted_desires) or "(none)"),
            "- Familiarity: " + familiarity,
        ]
    )


def _history_block(entries: Sequence[HistoryEntry]) -> str:
    if not entries:
        return "(none yet)"
    return "\n".join(f"{i + 1}. {entry.content}" for i, entry in enumerate(entries))


def _query_section(query_text: Optional[str]) -> str:
    if query_text is None:
        return ""
    return f'The user just asked: "{query_text}". The knowledge you generate must answer it.\n\n'


def build_generation_prompt(
    ctx: ContextDescription,
    history_entries: Sequence[HistoryEntry],
    profile: Optional[UserProfile],
    variant: PipelineVariant,
    query_text: Optional[str] = None,
) -> str:
    if variant is PipelineVariant.NO_RULES_NO_PROFILE:
        profile = None
    if variant is PipelineVariant.FULL:
        return _load_template("knowledge_generation").substitute(
            context_block=_context_block(ctx),
            profile_section=_profile_section(profile),
            history_block=_history_block(history_entries),
            query_section=_query_section(query_text),
        )
    # Both baselines share one reduced template: no selection rules, no
    # history reasoning, just the bare generation instruction.
    return _load_template("knowledge_generation_plain").substitute(
        context_block=_context_block(ctx),
        profile_section=_profile_section(profile),
        query_section=_query_section(query_text),
    )


def _items_block(contents: Sequence[str]) -> str:
    return "\n".join(f"Item {i + 1}: {content}" for i, content in enumerate(contents))


def build_transform_prompt(contents: Sequence[str], language: str) -> str:
    if language == "en":
        instruction = ""
    else:
        instruction = (
            f"\nWrite every keyword and voiceover in the language with code {language!r}; "
            "earlier stages worked in English, but the user-facing text must not.\n"
        )
    return _load_template("transform_text").substitute(
        items_block=_items_block(contents),
        language_instruction=instruction,
    )


def build_image_prompt(
    items: Sequence[tuple[str, Sequence[str]]], frame_times: Sequence[int]
) -> str:
    lines = []
    for i, (content, entities) in enumerate(items):
        lines.append(f"Item {i + 1}: {content}")
        lines.append("  Entities: " + (", ".join(entities) or "(none)"))
    return _load_template("image_reference").substitute(
        items_block="\n".join(lines),
        frame_times=", ".join(str(t) for t in frame_times),
    )


# -- response parsing ---------------------------------------------------


def _extract_payload(response: str, expected_format: str):
    fence = re.search(
        r"```" + re.escape(expected_format) + r"[ \t]*\n(.*?)\n?```",
        response,
        re.DOTALL,
    )
    if fence is None:
        raise ParseError(f"no fenced block tagged {expected_format}")
    try:
        return json.loads(fence.group(1))
    except json.JSONDecodeError as exc:
        raise ParseError(f"bad JSON inside {expected_format} block: {exc}") from exc


def _require(payload, key: str):
    if not isinstance(payload, dict) or key not in payload:
        raise ParseError(f"missing key {key!r}")
    return payload[key]


def _string_list(value, what: str) -> tuple[str, ...]:
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise ParseError(f"{what} must be a list of strings")
    return tuple(value)


def parse_context(response: str) -> ContextDescription:
    payload = _extract_payload(response, CONTEXT_FORMAT)
    activity = _require(payload, "activity")
    if not isinstance(activity, str) or not activity.strip():
        raise ParseError("activity must be a non-empty string")
    mode_raw = _require(payload, "gaze_mode")
    try:
        gaze_mode = GazeMode(mode_raw)
    except ValueError:
        raise ParseError(f"unknown gaze_mode {mode_raw!r}") from None
    notes_raw = _require(payload, "familiarity_notes")
    if not isinstance(notes_raw, list):
        raise ParseError("familiarity_notes must be a list")
    notes = []
    for pair in notes_raw:
        ok = (
            isinstance(pair, (list, tuple))
            and len(pair) == 2
            and all(isinstance(p, str) for p in pair)
        )
        if not ok:
            raise ParseError("familiarity_notes entries must be [entity, level] pairs")
        notes.append((pair[0], pair[1]))
    return ContextDescription(
        activity=activity,
        gaze_mode=gaze_mode,
        primary_entities=_string_list(_require(payload, "primary_entities"), "primary_entities"),
        peripheral_entities=_string_list(
            _require(payload, "peripheral_entities"), "peripheral_entities"
        ),
        predicted_desires=_string_list(_require(payload, "predicted_desires"), "predicted_desires"),
        familiarity_notes=tuple(notes),
        raw_text=response,
    )


def _sentence_count(content: str) -> int:
    return max(len(_SENTENCE_END_RE.findall(content.strip())), 1)


def _parse_factors(row) -> tuple[FactorScores, tuple[tuple[str, str], ...]]:
    factors_raw = _require(row, "factors")
    if not isinstance(factors_raw, dict) or set(factors_raw) != set(FACTOR_NAMES):
        raise ParseError(f"factors must have exactly the keys {FACTOR_NAMES}")
    for name, value in factors_raw.items():
        if type(value) is not int or value not in (0, 1):
            raise ParseError(f"factor {name} must be 0 or 1, got {value!r}")
    reasoning_raw = _require(row, "factor_reasoning")
    if not isinstance(reasoning_raw, dict) or set(reasoning_raw) != set(FACTOR_NAMES):
        raise ParseError(f"factor_reasoning must have exactly the keys {FACTOR_NAMES}")
    for name, value in reasoning_raw.items():
        if not isinstance(value, str) or not value.strip():
            raise ParseError(f"factor_reasoning[{name}] must be a non-empty string")
    factors = FactorScores(**{name: factors_raw[name] for name in FACTOR_NAMES})
    reasoning = tuple((name, reasoning_raw[name]) for name in FACTOR_NAMES)
    return factors, reasoning


def parse_candidates(response: str, scored: bool) -> list[KnowledgeCandidate]:
    if response.strip() == NOTHING_SENTINEL:
        raise NoCandidates("model answered with the nothing sentinel")
    fmt = CANDIDATES_FORMAT if scored else CANDIDATES_PLAIN_FORMAT
    payload = _extract_payload(response, fmt)
    rows = _require(payload, "candidates")
    if not isinstance(rows, list):
        raise ParseError("candidates must be a list")
    if not rows:
        raise NoCandidates("model returned an empty candidate list")
    candidates = []
    for index, row in enumerate(rows):
        content = _require(row, "content")
        if not isinstance(content, str) or not content.strip():
            raise ParseError("candidate content must be a non-empty string")
        if _sentence_count(content) > MAX_CONTENT_SENTENCES:
            raise ParseError("candidate content must be one or two sentences")
        type_raw = _require(row, "knowledge_type")
        try:
            knowledge_type = KnowledgeType(type_raw)
        except ValueError:
            raise ParseError(f"unknown knowledge_type {type_raw!r}") from None
        entities = _string_list(_require(row, "entities"), "entities")
        if scored:
            factors, reasoning = _parse_factors(row)
        else:
            factors, reasoning = None, None
        candidates.append(
            KnowledgeCandidate(
                content=content,
                knowledge_type=knowledge_type,
                entities=entities,
                factors=factors,
                factor_reasoning=reasoning,
                emitted_index=index,
            )
        )
    return candidates


def parse_transform(response: str, expected_items: int) -> list[TransformedItem]:
    payload = _extract_payload(response, TRANSFORM_FORMAT)
    rows = _require(payload, "items")
    if not isinstance(rows, list) or len(rows) != expected_items:
        raise ParseError(f"expected exactly {expected_items} transformed items")
    items = []
    for row in rows:
        pairs_raw = _require(row, "keyword_emoji_pairs")
        if not isinstance(pairs_raw, list) or not pairs_raw:
            raise ParseError("keyword_emoji_pairs must be a non-empty list")
        pairs = []
        for pair in pairs_raw:
            ok = (
                isinstance(pair, (list, tuple))
                and len(pair) == 2
                and all(isinstance(p, str) and p.strip() for p in pair)
            )
            if not ok:
                raise ParseError("each keyword/emoji pair must be two non-empty strings")
            pairs.append((pair[0], pair[1]))
        voiceover = _require(row, "voiceover_text")
        if not isinstance(voiceover, str) or not voiceover.strip():
            raise ParseError("voiceover_text must be a non-empty string")
        items.append(TransformedItem(keyword_emoji_pairs=tuple(pairs), voiceover_text=voiceover))
    return items


def parse_image_reference(response: str, evidence_times: Sequence[int]) -> ImageReference:
    payload = _extract_payload(response, IMAGE_REF_FORMAT)
    chosen = _require(payload, "chosen_frame_t_ms")
    if type(chosen) is not int or chosen not in set(evidence_times):
        raise ParseError(f"chosen_frame_t_ms {chosen!r} is not an evidence frame")
    boxes_raw = _require(payload, "boxes")
    if not isinstance(boxes_raw, list):
        raise ParseError("boxes must be a list")
    boxes = []
    for row in boxes_raw:
        entity = _require(row, "entity")
        if not isinstance(entity, str) or not entity.strip():
            raise ParseError("box entity must be a non-empty string")
        try:
            x = float(_require(row, "x"))
            y = float(_require(row, "y"))
            w = float(_require(row, "w"))
            h = float(_require(row, "h"))
        except (TypeError, ValueError):
            raise ParseError("box coordinates must be numbers") from None
        if w <= 0 or h <= 0:
            raise ParseError("box width and height must be positive")
        # Out-of-range boxes are clamped into the unit square and flagged,
        # not rejected; e.g. (0.9, 0.9, 0.3, 0.3) becomes (0.9, 0.9, 0.1, 0.1).
        cx = min(max(x, 0.0), 1.0)
        cy = min(max(y, 0.0), 1.0)
        cw = min(w, 1.0 - cx)
        ch = min(h, 1.0 - cy)
        if cw <= 0 or ch <= 0:
            raise ParseError("box lies entirely outside the frame")
        clamped = (cx, cy, cw, ch) != (x, y, w, h)
        boxes.append(BoundingBox(entity=entity, x=cx, y=cy, w=cw, h=ch, clamped=clamped))
    return ImageReference(chosen_frame_t_ms=chosen, boxes=tuple(boxes))


# -- provider round-trips with one reformat retry -----------------------


def _reformat_request(request: ChatRequest, error: ParseError) -> ChatRequest:
    instruction = TextPart(
        "\nYour previous reply could not be parsed"
        f" ({error}). Reply again following the format instructions exactly:"
        f" one fenced code block tagged {request.expected_format} containing"
        " valid JSON of the agreed shape, and no other text."
    )
    return ChatRequest(
        tier=request.tier,
        parts=request.parts + (instruction,),
        expected_format=request.expected_format,
    )


def _chat_with_retry(provider: ChatProvider, request: ChatRequest, stage: str, parser):
    """Returns (parsed value, exchanges). NoCandidates passes straight out."""
    response = provider.chat(request)
    exchanges = [
        AgentExchange(
            stage=stage,
            prompt=request.text(),
            response=response,
            image_refs=tuple(request.image_refs()),
        )
    ]
    try:
        return parser(response), exchanges
    except ParseError as first_error:
        retry_request = _reformat_request(request, first_error)
        retry_response = provider.chat(retry_request)
        exchanges.append(
            AgentExchange(
                stage=stage,
                prompt=retry_request.text(),
                response=retry_response,
                image_refs=tuple(retry_request.image_refs()),
                retried=True,
            )
        )
        return parser(retry_response), exchanges


# -- pipeline operations ------------------------------------------------


def analyze_context(
    provider: ChatProvider,
    trigger: TriggerEvent,
    frames_with_overlays: Sequence[tuple[Frame, tuple[tuple[float, float], ...]]],
    wallclock: str,
    location: str,
    profile: Optional[UserProfile],
    variant: PipelineVariant,
) -> tuple[ContextDescription, list[AgentExchange]]:
    prompt = build_context_prompt(trigger, wallclock, location, profile, variant)
    parts: list = [TextPart(prompt)]
    for frame, centers in frames_with_overlays:
        parts.append(
            ImagePart(image_ref=frame.image_ref, overlay_centers=tuple(centers), render_overlay=True)
        )
    request = ChatRequest(tier=Tier.FAST, parts=tuple(parts), expected_format=CONTEXT_FORMAT)
    return _chat_with_retry(provider, request, "context_analysis", parse_context)


def generate_candidates(
    provider: ChatProvider,
    ctx: ContextDescription,
    best_frame: Optional[Frame],
    history_entries: Sequence[HistoryEntry],
    profile: Optional[UserProfile],
    variant: PipelineVariant,
    query_text: Optional[str] = None,
) -> tuple[list[KnowledgeCandidate], list[AgentExchange]]:
    prompt = build_generation_prompt(ctx, history_entries, profile, variant, query_text)
    parts: list = [TextPart(prompt)]
    if best_frame is not None:
        parts.append(ImagePart(image_ref=best_frame.image_ref))
    scored = variant is PipelineVariant.FULL
    fmt = CANDIDATES_FORMAT if scored else CANDIDATES_PLAIN_FORMAT
    request = ChatRequest(tier=Tier.STRONG, parts=tuple(parts), expected_format=fmt)
    return _chat_with_retry(
        provider, request, "knowledge_generation", lambda r: parse_candidates(r, scored)
    )


def _entity_affinity(candidate: KnowledgeCandidate, ctx: ContextDescription) -> int:
    entities = {e.casefold() for e in candidate.entities}
    primary = {e.casefold() for e in ctx.primary_entities}
    peripheral = {e.casefold() for e in ctx.peripheral_entities}
    if ctx.gaze_mode is GazeMode.FOCUSED:
        return 1 if entities & primary and entities & peripheral else 0
    if ctx.gaze_mode is GazeMode.QUICK_BROWSE:
        return 1 if entities & primary else 0
    return 0


def score_filter_select(
    candidates: Sequence[KnowledgeCandidate],
    ctx: ContextDescription,
    history: HistoryStore,
    embedder: Embedder,
    min_total: int = DEFAULT_MIN_TOTAL,
    novelty_mandatory: bool = True,
    dedup_threshold: float = DEFAULT_DEDUP_THRESHOLD,
    max_items: int = DEFAULT_MAX_ITEMS,
) -> list[SelectedItem]:
    """Factor gates, history dedup, ordering, and the delivery cap.

    Unscored candidates (total -1, baseline variants) skip the factor gates
    but still face dedup, ordering, and the cap.
    """
    survivors = []
    for candidate in candidates:
        if candidate.factors is not None:
            if candidate.total < min_total:
                continue
            if novelty_mandatory and candidate.factors.novelty == 0:
                continue
        embedding = embedder.embed_text(candidate.content)
        max_sim = history.max_similarity(embedding)
        if max_sim >= dedup_threshold:
            continue
        survivors.append(
            SelectedItem(
                candidate=candidate,
                embedding=embedding,
                max_history_sim=max_sim,
                affinity=_entity_affinity(candidate, ctx),
            )
        )
    survivors.sort(
        key=lambda item: (-item.candidate.total, -item.affinity, item.candidate.emitted_index)
    )
    return survivors[:max_items]


def transform_text(
    provider: ChatProvider,
    selected: Sequence[SelectedItem],
    preferred_language: str,
) -> tuple[list[TransformedItem], list[AgentExchange]]:
    contents = [item.candidate.content for item in selected]
    prompt = build_transform_prompt(contents, preferred_language)
    request = ChatRequest(
        tier=Tier.FAST, parts=(TextPart(prompt),), expected_format=TRANSFORM_FORMAT
    )
    return _chat_with_retry(
        provider, request, "transform_text", lambda r: parse_transform(r, len(selected))
    )


def locate_entities(
    provider: ChatProvider,
    selected: Sequence[SelectedItem],
    evidence_frames: Sequence[Frame],
) -> tuple[ImageReference, list[AgentExchange]]:
    items = [(item.candidate.content, item.candidate.entities) for item in selected]
    times = [frame.t_ms for frame in evidence_frames]
    prompt = build_image_prompt(items, times)
    parts: list = [TextPart(prompt)]
    for frame in evidence_frames:
        # The user sees this frame with boxes on it; keep it free of burned-in
        # gaze circles.
        parts.append(ImagePart(image_ref=frame.image_ref))
    request = ChatRequest(tier=Tier.FAST, parts=tuple(parts), expected_format=IMAGE_REF_FORMAT)
    return _chat_with_retry(
        provider, request, "locate_entities", lambda r: parse_image_reference(r, times)
    )


def run_presentation_stage(
    provider: ChatProvider,
    selected: Sequence[SelectedItem],
    preferred_language: str,
    evidence_frames: Sequence[Frame],
) -> tuple[list[TransformedItem], Optional[ImageReference], list[AgentExchange]]:
    """Run the text transform and the image reference agents concurrently.

    With no evidence frames (a query before the first sampled frame) the
    image agent is skipped and the delivery ships without an image.
    """
    if not evidence_frames:
        transformed, exchanges = transform_text(provider, selected, preferred_language)
        return transformed, None, exchanges
    with ThreadPoolExecutor(max_workers=2) as pool:
        transform_future = pool.submit(transform_text, provider, selected, preferred_language)
        locate_future = pool.submit(locate_entities, provider, selected, evidence_frames)
        transform_error: Optional[Exception] = None
        locate_error: Optional[Exception] = None
        transformed, t_exchanges = [], []
        image_ref, l_exchanges = None, []
        try:
            transformed, t_exchanges = transform_future.result()
        except Exception as exc:
            transform_error = exc
        try:
            image_ref, l_exchanges = locate_future.result()
        except Exception as exc:
            locate_error = exc
    # Join first, then fail: both futures have finished by here, and the
    # transform error wins when both sides broke.
    if transform_error is not None:
        raise transform_error
    if locate_error is not None:
        raise locate_error
    return transformed, image_ref, t_exchanges + l_exchanges
