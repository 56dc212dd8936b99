"""Burn gaze circles into a frame before it leaves for a provider."""

from __future__ import annotations

import io
from typing import Sequence

from PIL import Image, ImageDraw

DEFAULT_RADIUS_FRAC = 0.02
OVERLAY_COLOR = (255, 32, 32)


def render_gaze_overlay(
    image_ref: str,
    centers: Sequence[tuple[float, float]],
    radius_frac: float = DEFAULT_RADIUS_FRAC,
) -> bytes:
    """Return PNG bytes of the frame with red circles at the gaze centers.

    Centers are normalized coordinates; the radius defaults to 2% of the
    frame width. With no centers the frame is re-encoded unchanged.
    """
    with Image.open(image_ref) as img:
        canvas = img.convert("RGB")
    if centers:
        draw = ImageDraw.Draw(canvas)
        radius = max(2.0, radius_frac * canvas.width)
        stroke = max(2, round(radius / 4))
        for cx, cy in centers:
            px = cx * canvas.width
            py = cy * canvas.height
            draw.ellipse(
                (px - radius, py - radius, px + radius, py + radius),
                outline=OVERLAY_COLOR,
                width=stroke,
            )
    buf = io.BytesIO()
    canvas.save(buf, format="PNG")
    return buf.getvalue()
