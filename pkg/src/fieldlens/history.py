"""Per-profile knowledge history: exact similarity search and persistence.

The store remembers every generated item (even ones canceled before
display) so near-duplicates stay suppressed across sessions. Persistence is
an append-only JSONL file per profile with embeddings inline; loading the
file rebuilds the store exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .providers.base import DimensionMismatch

UNIT_TOLERANCE = 1e-6
DEFAULT_TOP_K = 10


class DuplicateId(Exception):
    pass


@dataclass(frozen=True)
class HistoryEntry:
    id: str
    content: str
    embedding: np.ndarray
    entities: tuple[str, ...]
    session_id: str
    t_ms: int
    delivered: bool

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("entry id must be non-empty")
        vec = np.asarray(self.embedding, dtype=np.float64)
        if abs(float(np.linalg.norm(vec)) - 1.0) > UNIT_TOLERANCE:
            raise ValueError("entry embedding must be unit-norm")
        object.__setattr__(self, "embedding", vec)


class HistoryStore:
    """Exact (non-approximate) nearest-neighbor store over unit vectors."""

    def __init__(self, path: Optional[Union[str, Path]] = None) -> None:
        self.path = Path(path) if path is not None else None
        self._entries: list[HistoryEntry] = []
        self._ids: set[str] = set()
        if self.path is not None and self.path.exists():
            for line in self.path.read_text(encoding="utf-8").splitlines():
                line = line.strip()
                if line:
                    self._append(self._decode(line))

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def entries(self) -> list[HistoryEntry]:
        return list(self._entries)

    @staticmethod
    def _decode(line: str) -> HistoryEntry:
        row = json.loads(line)
        return HistoryEntry(
            id=row["id"],
            content=row["content"],
            embedding=np.asarray(row["embedding"], dtype=np.float64),
            entities=tuple(row["entities"]),
            session_id=row["session_id"],
            t_ms=int(row["t_ms"]),
            delivered=bool(row["delivered"]),
        )

    @staticmethod
    def _encode(entry: HistoryEntry) -> str:
        return json.dumps(
            {
                "schema": "history/1",
                "id": entry.id,
                "content": entry.content,
                "embedding": [float(v) for v in entry.embedding],
                "entities": list(entry.entities),
                "session_id": entry.session_id,
                "t_ms": entry.t_ms,
                "delivered": entry.delivered,
            },
            sort_keys=True,
        )

    def _append(self, entry: HistoryEntry) -> None:
        if entry.id in self._ids:
            raise DuplicateId(entry.id)
        if self._entries and entry.embedding.shape != self._entries[0].embedding.shape:
            raise DimensionMismatch(
                f"{entry.embedding.shape} vs {self._entries[0].embedding.shape}"
            )
        self._entries.append(entry)
        self._ids.add(entry.id)

    def add(self, entry: HistoryEntry) -> str:
        self._append(entry)
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(self._encode(entry) + "\n")
        return entry.id

    def top_k(self, query: np.ndarray, k: int = DEFAULT_TOP_K) -> list[tuple[HistoryEntry, float]]:
        """The k most similar entries, best first; ties favor newer entries."""
        query = np.asarray(query, dtype=np.float64)
        scored = [
            (float(np.dot(query, entry.embedding)), seq, entry)
            for seq, entry in enumerate(self._entries)
        ]
        scored.sort(key=lambda item: (-item[0], -item[1]))
        return [(entry, score) for score, _seq, entry in scored[:k]]

    def max_similarity(self, query: np.ndarray) -> float:
        """Highest cosine against the store; -1.0 when the store is empty."""
        if not self._entries:
            return -1.0
        query = np.asarray(query, dtype=np.float64)
        return max(float(np.dot(query, entry.embedding)) for entry in self._entries)
