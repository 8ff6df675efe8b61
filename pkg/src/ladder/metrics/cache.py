"""Persistent score cache backed by an append-only JSONL file.

Entries are keyed by a content hash of (metric, source, hypothesis,
reference), so a cache hit returns the bit-identical float the original
computation produced. Writes are serialized internally; readers share the
in-memory index.
"""

from __future__ import annotations

import hashlib
import json
import threading
from pathlib import Path


def score_key(metric: str, source: str, hypothesis: str, reference: str | None) -> str:
    digest = hashlib.sha256()
    for part in (metric, source, hypothesis, reference if reference is not None else "\x00<none>"):
        digest.update(part.encode("utf-8"))
        digest.update(b"\x1f")
    return digest.hexdigest()


class ScoreCache:
    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._entries: dict[str, float] = {}
        self._lock = threading.Lock()
        if self.path.exists():
            with open(self.path, encoding="utf-8") as handle:
                for lineno, raw in enumerate(handle, start=1):
                    if not raw.strip():
                        continue
                    try:
                        obj = json.loads(raw)
                        self._entries[obj["key"]] = float(obj["score"])
                    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                        raise ValueError(f"corrupt cache entry at {self.path}:{lineno}") from exc

    def get(self, metric: str, source: str, hypothesis: str, reference: str | None) -> float | None:
        return self._entries.get(score_key(metric, source, hypothesis, reference))

    def put(
        self, metric: str, source: str, hypothesis: str, reference: str | None, score: float
    ) -> None:
        key = score_key(metric, source, hypothesis, reference)
        with self._lock:
            if key in self._entries:
                return
            self._entries[key] = score
            with open(self.path, "a", encoding="utf-8") as handle:
                handle.write(json.dumps({"key": key, "score": score}) + "\n")

    def __len__(self) -> int:
        return len(self._entries)
