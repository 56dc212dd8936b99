"""Offline providers: deterministic hash embedders and scripted chat models.

Everything here is a pure function of its inputs (plus a fixed seed), which
is what makes whole-session replays bit-identical.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .base import (
    ChatRequest,
    EmptyInput,
    ProviderUnavailable,
    RateLimited,
    SafetyBlocked,
    request_fingerprint,
)

EMBEDDING_DIM = 64

_TOKEN_RE = re.compile(r"[^0-9a-z]+")


def _tokenize(text: str) -> list[str]:
    return [t for t in _TOKEN_RE.split(text.lower()) if t]


class HashTextEmbedder:
    """64-dim token-hash embedder.

    Scheme: lowercase, split on any non-alphanumeric run, then for each token
    take sha256(token) and add four signed unit bumps to the accumulator:
    for k in 0..3, index digest[2k] % 64 gets +1 if digest[2k+1] is even else
    -1. The accumulator is L2-normalized (an all-cancelling accumulator falls
    back to the constant ones vector before normalizing). The vector is a
    function of the token multiset only, so token order never matters.
    """

    dim = EMBEDDING_DIM

    def embed_text(self, text: str) -> np.ndarray:
        tokens = _tokenize(text)
        if not tokens:
            raise EmptyInput("no tokens to embed")
        acc = np.zeros(self.dim, dtype=np.float64)
        for token in tokens:
            digest = hashlib.sha256(token.encode("utf-8")).digest()
            for k in range(4):
                index = digest[2 * k] % self.dim
                sign = 1.0 if digest[2 * k + 1] % 2 == 0 else -1.0
                acc[index] += sign
        norm = float(np.linalg.norm(acc))
        if norm == 0.0:
            acc = np.ones(self.dim, dtype=np.float64)
            norm = float(np.linalg.norm(acc))
        return acc / norm

    def embed_image(self, image_ref: str) -> np.ndarray:
        raise EmptyInput("text embedder got an image")


class HashImageEmbedder:
    """64-dim content-hash embedder for frames.

    Scheme: digest = sha256(file bytes); component i is derived from
    sha256(digest + byte(i)) mapped uniformly into [-1, 1], then the vector
    is L2-normalized. Identical bytes embed identically; distinct images get
    near-orthogonal vectors. With read_bytes=False the path string itself is
    hashed, which lets tests build recordings without touching disk.
    """

    dim = EMBEDDING_DIM

    def __init__(self, read_bytes: bool = True) -> None:
        self.read_bytes = read_bytes

    def embed_image(self, image_ref: str) -> np.ndarray:
        if self.read_bytes:
            try:
                with open(image_ref, "rb") as fh:
                    data = fh.read()
            except OSError as exc:
                raise EmptyInput(f"cannot read image {image_ref}") from exc
        else:
            data = image_ref.encode("utf-8")
        if not data:
            raise EmptyInput(f"empty image {image_ref}")
        digest = hashlib.sha256(data).digest()
        values = np.empty(self.dim, dtype=np.float64)
        for i in range(self.dim):
            sub = hashlib.sha256(digest + bytes([i])).digest()
            u = int.from_bytes(sub[:8], "big") / float(2**64)
            values[i] = 2.0 * u - 1.0
        return values / float(np.linalg.norm(values))

    def embed_text(self, text: str) -> np.ndarray:
        raise EmptyInput("image embedder got text")


class CombinedHashEmbedder:
    """Text and image hash embedders behind one Embedder face."""

    dim = EMBEDDING_DIM

    def __init__(self, read_bytes: bool = True) -> None:
        self._text = HashTextEmbedder()
        self._image = HashImageEmbedder(read_bytes=read_bytes)

    def embed_text(self, text: str) -> np.ndarray:
        return self._text.embed_text(text)

    def embed_image(self, image_ref: str) -> np.ndarray:
        return self._image.embed_image(image_ref)


@dataclass
class ScriptRule:
    """One fixture: matches on expected_format plus an optional substring.

    The substring is searched in the request's text parts and image refs.
    A response may be an exception instance, which is raised instead.
    """

    expected_format: str
    response: Union[str, Exception]
    contains: Optional[str] = None

    def matches(self, request: ChatRequest) -> bool:
        if request.expected_format != self.expected_format:
            return False
        if self.contains is None:
            return True
        haystack = request.text() + "\n" + "\n".join(request.image_refs())
        return self.contains in haystack


@dataclass
class ScriptedChatProvider:
    """Replays canned responses; first matching rule wins.

    Responses depend only on the request, so replays through this provider
    are deterministic. Calls are recorded for test inspection.
    """

    rules: list[ScriptRule] = field(default_factory=list)
    calls: list[str] = field(default_factory=list)

    def chat(self, request: ChatRequest) -> str:
        self.calls.append(request_fingerprint(request))
        for rule in self.rules:
            if rule.matches(request):
                if isinstance(rule.response, Exception):
                    raise rule.response
                return rule.response
        raise ProviderUnavailable(
            f"no scripted fixture for format {request.expected_format!r}"
        )


class _DigestStream:
    """Endless deterministic byte stream seeded from a string."""

    def __init__(self, seed: str) -> None:
        self._seed = seed.encode("utf-8")
        self._counter = 0
        self._buffer = b""

    def take(self, n: int) -> bytes:
        while len(self._buffer) < n:
            block = hashlib.sha256(self._seed + self._counter.to_bytes(4, "big")).digest()
            self._buffer += block
            self._counter += 1
        out, self._buffer = self._buffer[:n], self._buffer[n:]
        return out

    def pick(self, bound: int) -> int:
        if bound <= 0:
            raise ValueError("bound must be positive")
        return int.from_bytes(self.take(4), "big") % bound

    def choose(self, options: Sequence):
        return options[self.pick(len(options))]


_VOCABULARY = [
    "fern", "mug", "lamp", "poster", "bicycle", "kettle",
    "monstera", "espresso", "skylight", "bookshelf", "radiator", "vase",
]

_ACTIVITIES = [
    "walking through a workspace",
    "browsing shelves",
    "preparing a drink",
    "pausing near a window",
]

_EMOJI = ["🌿", "☕", "💡", "🚲", "📚", "🔥", "🌞", "🧭"]

_ITEM_MARKER_RE = re.compile(r"^Item \d+:", re.MULTILINE)
_FRAME_LINE_RE = re.compile(r"Evidence frame times \(ms\): ([0-9, ]+)")


class SyntheticChatProvider:
    """Schema-aware generator of plausible responses.

    Output is a pure function of (seed, request fingerprint), so randomized
    replays stay reproducible. A small slice of requests fails with
    RateLimited or SafetyBlocked to keep error paths honest; set the rates to
    zero for always-succeeding runs.
    """

    def __init__(self, seed: str = "0", rate_limit_per_mille: int = 20, safety_per_mille: int = 10) -> None:
        self.seed = seed
        self.rate_limit_per_mille = rate_limit_per_mille
        self.safety_per_mille = safety_per_mille

    def chat(self, request: ChatRequest) -> str:
        stream = _DigestStream(f"{self.seed}:{request_fingerprint(request)}")
        roll = stream.pick(1000)
        if roll < self.rate_limit_per_mille:
            raise RateLimited("synthetic rate limit")
        if roll < self.rate_limit_per_mille + self.safety_per_mille:
            raise SafetyBlocked("synthetic safety refusal")

        fmt = request.expected_format
        if fmt == "context/1":
            return self._context(stream)
        if fmt == "candidates/1":
            return self._candidates(stream, scored=True)
        if fmt == "candidates_plain/1":
            return self._candidates(stream, scored=False)
        if fmt == "transform/1":
            return self._transform(stream, request)
        if fmt == "image_ref/1":
            return self._image_ref(stream, request)
        raise ProviderUnavailable(f"synthetic provider does not know format {fmt!r}")

    @staticmethod
    def _fence(fmt: str, payload: dict) -> str:
        return f"```{fmt}\n{json.dumps(payload, indent=1)}\n```"

    def _entities(self, stream: _DigestStream, low: int, high: int) -> list[str]:
        count = low + stream.pick(high - low + 1)
        start = stream.pick(len(_VOCABULARY))
        return [_VOCABULARY[(start + i) % len(_VOCABULARY)] for i in range(count)]

    def _context(self, stream: _DigestStream) -> str:
        primary = self._entities(stream, 1, 3)
        peripheral = [e for e in self._entities(stream, 0, 2) if e not in primary]
        payload = {
            "activity": stream.choose(_ACTIVITIES),
            "gaze_mode": stream.choose(["Saccade", "QuickBrowse", "Focused"]),
            "primary_entities": primary,
            "peripheral_entities": peripheral,
            "predicted_desires": [f"learn more about the {primary[0]}"],
            "familiarity_notes": [[e, stream.choose(["familiar", "new"])] for e in primary],
        }
        return self._fence("context/1", payload)

    def _candidates(self, stream: _DigestStream, scored: bool) -> str:
        n = stream.choose([0, 1, 1, 2, 2, 3])
        if n == 0:
            return "NOTHING"
        rows = []
        for i in range(n):
            entity = stream.choose(_VOCABULARY)
            tag = stream.take(4).hex()
            row = {
                "content": f"The {entity} nearby has a lesser-known story: trait {tag} "
                f"shaped how people use it today.",
                "knowledge_type": stream.choose(["Factual", "Conceptual", "Procedural"]),
                "entities": [entity],
            }
            if scored:
                factors = {
                    "novelty": 1 if stream.pick(10) < 8 else 0,
                    "interest_alignment": stream.pick(2),
                    "usefulness": stream.pick(2),
                    "unexpectedness": stream.pick(2),
                }
                row["factors"] = factors
                row["factor_reasoning"] = {
                    k: f"synthetic reasoning {v}" for k, v in factors.items()
                }
            rows.append(row)
        fmt = "candidates/1" if scored else "candidates_plain/1"
        return self._fence(fmt, {"candidates": rows})

    def _transform(self, stream: _DigestStream, request: ChatRequest) -> str:
        count = len(_ITEM_MARKER_RE.findall(request.text())) or 1
        items = []
        for _ in range(count):
            keyword = stream.choose(_VOCABULARY)
            items.append(
                {
                    "keyword_emoji_pairs": [[keyword, stream.choose(_EMOJI)]],
                    "voiceover_text": f"Here is something about the {keyword} you might enjoy.",
                }
            )
        return self._fence("transform/1", {"items": items})

    def _image_ref(self, stream: _DigestStream, request: ChatRequest) -> str:
        match = _FRAME_LINE_RE.search(request.text())
        if not match:
            raise ProviderUnavailable("no evidence frame list in request")
        times = [int(tok) for tok in match.group(1).replace(" ", "").split(",") if tok]
        chosen = times[stream.pick(len(times))]
        boxes = []
        for _ in range(stream.pick(3)):
            # Coordinates may exceed the unit square on purpose; the parser
            # is expected to clamp and flag them.
            boxes.append(
                {
                    "entity": stream.choose(_VOCABULARY),
                    "x": stream.pick(110) / 100.0,
                    "y": stream.pick(110) / 100.0,
                    "w": 0.05 + stream.pick(30) / 100.0,
                    "h": 0.05 + stream.pick(30) / 100.0,
                }
            )
        return self._fence("image_ref/1", {"chosen_frame_t_ms": chosen, "boxes": boxes})
