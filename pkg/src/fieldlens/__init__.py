"""Gaze-driven proactive knowledge discovery engine.

Turns a recorded first-person session (camera frames + gaze + spoken
queries) into prioritized, deduplicated knowledge deliveries, either in a
deterministic offline replay or behind a live HTTP/WebSocket service.
"""

__version__ = "0.1.0"
