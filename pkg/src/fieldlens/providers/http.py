"""HTTP-backed providers for live runs.

The wire format is a deliberately small JSON shape so any model gateway can
adapt to it. Credentials are read from the environment at call time and
never appear in logs or errors.
"""

from __future__ import annotations

import base64
import os

import httpx
import numpy as np

from .base import (
    ChatRequest,
    EmptyInput,
    ImagePart,
    ProviderTierConfig,
    ProviderUnavailable,
    RateLimited,
    SafetyBlocked,
    TextPart,
)
from .render import render_gaze_overlay


def _auth_headers(config: ProviderTierConfig) -> dict[str, str]:
    if not config.credentials_env:
        return {}
    token = os.environ.get(config.credentials_env, "")
    if not token:
        raise ProviderUnavailable(
            f"credentials variable {config.credentials_env} is not set"
        )
    return {"Authorization": f"Bearer {token}"}


def _raise_for_status(response: httpx.Response) -> None:
    if response.status_code == 429:
        raise RateLimited("provider rate limit")
    if response.status_code in (400, 422, 451):
        try:
            body = response.json()
        except ValueError:
            body = {}
        if isinstance(body, dict) and body.get("blocked"):
            raise SafetyBlocked(str(body.get("reason", "blocked")))
    if response.status_code >= 400:
        raise ProviderUnavailable(f"provider returned HTTP {response.status_code}")


class HttpChatProvider:
    def __init__(self, config: ProviderTierConfig) -> None:
        if not config.endpoint:
            raise ValueError("http chat provider needs an endpoint")
        self.config = config
        self._client = httpx.Client(timeout=config.timeout_ms / 1000.0)

    def _encode_part(self, part) -> dict:
        if isinstance(part, TextPart):
            return {"type": "text", "text": part.text}
        assert isinstance(part, ImagePart)
        if part.render_overlay and part.overlay_centers:
            data = render_gaze_overlay(part.image_ref, part.overlay_centers)
            media_type = "image/png"
        else:
            with open(part.image_ref, "rb") as fh:
                data = fh.read()
            media_type = "image/jpeg" if part.image_ref.lower().endswith((".jpg", ".jpeg")) else "image/png"
        return {
            "type": "image",
            "media_type": media_type,
            "data": base64.b64encode(data).decode("ascii"),
        }

    def chat(self, request: ChatRequest) -> str:
        payload = {
            "model": self.config.model,
            "expected_format": request.expected_format,
            "parts": [self._encode_part(p) for p in request.parts],
        }
        try:
            response = self._client.post(
                self.config.endpoint, json=payload, headers=_auth_headers(self.config)
            )
        except httpx.HTTPError as exc:
            raise ProviderUnavailable(f"transport failure: {type(exc).__name__}") from exc
        _raise_for_status(response)
        try:
            body = response.json()
        except ValueError as exc:
            raise ProviderUnavailable("provider returned non-JSON body") from exc
        text = body.get("text") if isinstance(body, dict) else None
        if not isinstance(text, str):
            raise ProviderUnavailable("provider response missing text field")
        return text


class HttpEmbedder:
    def __init__(self, config: ProviderTierConfig) -> None:
        if not config.endpoint:
            raise ValueError("http embedder needs an endpoint")
        self.config = config
        self._client = httpx.Client(timeout=config.timeout_ms / 1000.0)

    def _post(self, payload: dict) -> np.ndarray:
        payload["model"] = self.config.model
        try:
            response = self._client.post(
                self.config.endpoint, json=payload, headers=_auth_headers(self.config)
            )
        except httpx.HTTPError as exc:
            raise ProviderUnavailable(f"transport failure: {type(exc).__name__}") from exc
        _raise_for_status(response)
        try:
            values = response.json()["embedding"]
        except (ValueError, KeyError, TypeError) as exc:
            raise ProviderUnavailable("provider response missing embedding") from exc
        vec = np.asarray(values, dtype=np.float64)
        norm = float(np.linalg.norm(vec))
        if vec.ndim != 1 or vec.size == 0 or norm == 0.0:
            raise ProviderUnavailable("provider returned an unusable embedding")
        # Engine invariants want unit vectors; normalize whatever came back.
        return vec / norm

    def embed_text(self, text: str) -> np.ndarray:
        if not text.strip():
            raise EmptyInput("cannot embed empty text")
        return self._post({"input_text": text})

    def embed_image(self, image_ref: str) -> np.ndarray:
        try:
            with open(image_ref, "rb") as fh:
                data = fh.read()
        except OSError as exc:
            raise EmptyInput(f"cannot read image {image_ref}") from exc
        return self._post({"input_image_b64": base64.b64encode(data).decode("ascii")})
