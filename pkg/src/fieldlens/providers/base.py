"""Provider-facing request types, errors, and embedding math.

Two model tiers exist: Fast for cheap perception/formatting calls and Strong
for knowledge generation. Requests are multimodal part lists; whether an
image part gets gaze circles burned in is decided here, at the provider
boundary, not upstream.
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence, Union

import numpy as np

UNIT_NORM_TOLERANCE = 1e-6
MAX_IMAGES_PER_REQUEST = 16


class Tier(enum.Enum):
    FAST = "fast"
    STRONG = "strong"


class ProviderUnavailable(Exception):
    """Transport-level failure (timeout, connection refused, 5xx)."""


class RateLimited(Exception):
    pass


class SafetyBlocked(Exception):
    """The model refused the request; callers skip instead of crashing."""


class EmptyInput(Exception):
    pass


class DimensionMismatch(Exception):
    pass


@dataclass(frozen=True)
class TextPart:
    text: str


@dataclass(frozen=True)
class ImagePart:
    image_ref: str
    overlay_centers: tuple[tuple[float, float], ...] = ()
    render_overlay: bool = False


Part = Union[TextPart, ImagePart]


@dataclass(frozen=True)
class ChatRequest:
    tier: Tier
    parts: tuple[Part, ...]
    expected_format: str

    def __post_init__(self) -> None:
        if not self.parts:
            raise ValueError("a chat request needs at least one part")
        n_images = sum(1 for p in self.parts if isinstance(p, ImagePart))
        if n_images > MAX_IMAGES_PER_REQUEST:
            raise ValueError(f"too many image parts: {n_images} > {MAX_IMAGES_PER_REQUEST}")
        if not self.expected_format:
            raise ValueError("expected_format must be set")

    def text(self) -> str:
        return "\n".join(p.text for p in self.parts if isinstance(p, TextPart))

    def image_refs(self) -> list[str]:
        return [p.image_ref for p in self.parts if isinstance(p, ImagePart)]


class ChatProvider(Protocol):
    def chat(self, request: ChatRequest) -> str: ...


class Embedder(Protocol):
    def embed_text(self, text: str) -> np.ndarray: ...

    def embed_image(self, image_ref: str) -> np.ndarray: ...


def _image_token(ref: str) -> str:
    # Fingerprint stored frames by content, so the digest does not change
    # with the directory a session happens to live in. Opaque refs (mem://)
    # stand for themselves.
    try:
        path = Path(ref)
        if path.is_file():
            return "sha256:" + hashlib.sha256(path.read_bytes()).hexdigest()
    except OSError:
        pass
    return ref


def request_fingerprint(request: ChatRequest) -> str:
    """Stable digest of a request; scripted mocks key their fixtures on it."""
    payload = {
        "tier": request.tier.value,
        "expected_format": request.expected_format,
        "parts": [
            {"text": p.text}
            if isinstance(p, TextPart)
            else {
                "image_ref": _image_token(p.image_ref),
                "overlay_centers": [list(c) for c in p.overlay_centers],
                "render_overlay": p.render_overlay,
            }
            for p in request.parts
        ],
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"{a.shape} vs {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise EmptyInput("cosine of a zero vector is undefined")
    return float(np.dot(a, b) / (na * nb))


def unit_norm_error(vec: np.ndarray) -> float:
    """How far the vector is from unit length; callers compare to tolerance."""
    return abs(float(np.linalg.norm(np.asarray(vec, dtype=np.float64))) - 1.0)


@dataclass(frozen=True)
class ProviderTierConfig:
    """Where one tier's calls go. Credentials come from the environment."""

    kind: str = "mock"  # "mock" or "http"
    endpoint: str = ""
    credentials_env: str = ""
    model: str = ""
    timeout_ms: int = 30000


@dataclass(frozen=True)
class ProviderConfig:
    fast: ProviderTierConfig = field(default_factory=ProviderTierConfig)
    strong: ProviderTierConfig = field(default_factory=ProviderTierConfig)
    embedding: ProviderTierConfig = field(default_factory=ProviderTierConfig)
