"""Scripted agent responses and provider stand-ins shared across test modules.

PipelineChat answers every stage with well-formed payloads sized to the
request, so whole replays run against it deterministically. The smaller
builders make malformed variations easy to construct inline.
"""

from __future__ import annotations

import json
import re
import threading

from fieldlens.agents import (
    CANDIDATES_FORMAT,
    CANDIDATES_PLAIN_FORMAT,
    CONTEXT_FORMAT,
    FACTOR_NAMES,
    IMAGE_REF_FORMAT,
    TRANSFORM_FORMAT,
)
from fieldlens.orchestrator import ProviderSet
from fieldlens.providers.mock import CombinedHashEmbedder

_ITEM_RE = re.compile(r"^Item \d+: ", re.MULTILINE)
_TIMES_RE = re.compile(r"Evidence frame times \(ms\): ([0-9, ]+)")


def fenced(fmt: str, payload) -> str:
    return f"Here you go.\n```{fmt}\n{json.dumps(payload)}\n```\n"


def context_payload(**overrides):
    payload = {
        "activity": "browsing a market stall",
        "gaze_mode": "Focused",
        "primary_entities": ["dragon fruit"],
        "peripheral_entities": ["hanging scale"],
        "predicted_desires": ["how to pick a ripe one"],
        "familiarity_notes": [["dragon fruit", "low"]],
    }
    payload.update(overrides)
    return payload


def candidate_row(content="Dragon fruit grows on a climbing cactus.", factors=(1, 1, 0, 0), **overrides):
    row = {
        "content": content,
        "knowledge_type": "Factual",
        "entities": ["dragon fruit"],
    }
    if factors is not None:
        row["factors"] = dict(zip(FACTOR_NAMES, factors))
        row["factor_reasoning"] = {name: f"reason about {name}" for name in FACTOR_NAMES}
    row.update(overrides)
    return row


def transform_payload(n):
    return {
        "items": [
            {"keyword_emoji_pairs": [[f"keyword {i}", "🌵"]], "voiceover_text": f"Line {i}."}
            for i in range(n)
        ]
    }


def image_payload(boxes, chosen=48_000):
    return {"chosen_frame_t_ms": chosen, "boxes": boxes}


def box_row(x, y, w, h, entity="plant"):
    return {"entity": entity, "x": x, "y": y, "w": w, "h": h}


# Each generation call draws the next row pair; vocabularies barely overlap,
# so hash-embedding cosines between calls stay far below the dedup threshold.
CONTENT_BANK = [
    ("The crane rails date from nineteen twelve.", "Swallows nest under the warehouse eaves."),
    ("Cobbles here arrived as ship ballast.", "That chimney vented a steam winch."),
    ("Mooring rings wear grooves from hemp rope.", "Lime kilns glowed along this bank."),
    ("Pilots trained on the old signal mast.", "Tide gauges ran on clockwork drums."),
    ("Barrel hoops were forged two streets over.", "Ice barges supplied the fish market."),
    ("The ferry bell hangs in a pub now.", "Gas lamps burned until the sixties."),
]


class PipelineChat:
    """Deterministic well-formed responses for every agent stage.

    unique_contents walks the content bank so successive deliveries are not
    near-duplicates of each other; turn it off to replay the same pair every
    call and exercise the history dedup gate across triggers.
    """

    def __init__(self, factors=((1, 1, 1, 0), (1, 1, 0, 0)), unique_contents=True, gaze_mode="Focused"):
        self.requests = []
        self._factors = factors
        self._unique = unique_contents
        self._gaze_mode = gaze_mode
        self._generation_calls = 0
        self._lock = threading.Lock()

    def chat(self, request) -> str:
        with self._lock:
            self.requests.append(request)
            fmt = request.expected_format
            if fmt == CONTEXT_FORMAT:
                return fenced(fmt, context_payload(gaze_mode=self._gaze_mode))
            if fmt in (CANDIDATES_FORMAT, CANDIDATES_PLAIN_FORMAT):
                self._generation_calls += 1
                tag = self._generation_calls - 1 if self._unique else 0
                pair = CONTENT_BANK[tag % len(CONTENT_BANK)]
                rows = []
                for i, factor_values in enumerate(self._factors):
                    scored = factor_values if fmt == CANDIDATES_FORMAT else None
                    rows.append(candidate_row(pair[i % len(pair)], scored))
                return fenced(fmt, {"candidates": rows})
            if fmt == TRANSFORM_FORMAT:
                n = len(_ITEM_RE.findall(request.text()))
                return fenced(fmt, transform_payload(n))
            if fmt == IMAGE_REF_FORMAT:
                times = _TIMES_RE.search(request.text())
                chosen = int(times.group(1).split(",")[0].strip())
                return fenced(fmt, image_payload([box_row(0.4, 0.3, 0.2, 0.3)], chosen=chosen))
            raise AssertionError(f"unexpected request format {fmt!r}")

    def stage_requests(self, fmt):
        return [r for r in self.requests if r.expected_format == fmt]


class FlakyChat:
    """Wraps another chat provider; raises once per registered format first."""

    def __init__(self, inner, failures: dict):
        self._inner = inner
        self._pending = dict(failures)

    def chat(self, request) -> str:
        exc = self._pending.pop(request.expected_format, None)
        if exc is not None:
            raise exc
        return self._inner.chat(request)


class RiggedChat:
    """Delegates to an inner provider except for formats with a fixed outcome.

    The fixed value is returned on every call (or raised, for exceptions), so
    persistent failure modes are easy to stage.
    """

    def __init__(self, inner, fixed: dict):
        self._inner = inner
        self._fixed = dict(fixed)
        self.requests = []

    def chat(self, request) -> str:
        self.requests.append(request)
        if request.expected_format in self._fixed:
            outcome = self._fixed[request.expected_format]
            if isinstance(outcome, Exception):
                raise outcome
            return outcome
        return self._inner.chat(request)


class CountingEmbedder:
    """Counts calls through to a hash embedder; can fail image embeds."""

    def __init__(self, image_error=None):
        self._inner = CombinedHashEmbedder(read_bytes=False)
        self.image_calls = 0
        self.text_calls = 0
        self.image_error = image_error

    def embed_image(self, ref):
        self.image_calls += 1
        if self.image_error is not None:
            raise self.image_error
        return self._inner.embed_image(ref)

    def embed_text(self, text):
        self.text_calls += 1
        return self._inner.embed_text(text)


def mock_provider_set(chat=None, embedder=None) -> ProviderSet:
    chat = chat if chat is not None else PipelineChat()
    embedder = embedder if embedder is not None else CombinedHashEmbedder(read_bytes=False)
    return ProviderSet(fast=chat, strong=chat, embedder=embedder)
