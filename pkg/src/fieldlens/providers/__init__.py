"""Provider abstraction: chat models, embedders, and mock implementations."""

from .base import (
    ChatProvider,
    ChatRequest,
    DimensionMismatch,
    Embedder,
    EmptyInput,
    ImagePart,
    ProviderUnavailable,
    RateLimited,
    SafetyBlocked,
    TextPart,
    Tier,
    cosine,
    request_fingerprint,
    unit_norm_error,
)
from .mock import (
    HashImageEmbedder,
    HashTextEmbedder,
    ScriptRule,
    ScriptedChatProvider,
    SyntheticChatProvider,
)

__all__ = [
    "ChatProvider",
    "ChatRequest",
    "DimensionMismatch",
    "Embedder",
    "EmptyInput",
    "HashImageEmbedder",
    "HashTextEmbedder",
    "ImagePart",
    "ProviderUnavailable",
    "RateLimited",
    "SafetyBlocked",
    "ScriptRule",
    "ScriptedChatProvider",
    "SyntheticChatProvider",
    "TextPart",
    "Tier",
    "cosine",
    "request_fingerprint",
    "unit_norm_error",
]
