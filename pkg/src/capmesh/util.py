"""Small shared helpers: ids, clocks, canonical JSON, and text tokenization."""

from __future__ import annotations

import hashlib
import json
import re
import threading
import uuid
from datetime import datetime, timezone
from typing import Any

# Words too common to carry signal in descriptions or queries. Shipped as a
# fixed list so token-overlap scores are reproducible everywhere.
STOPWORDS = frozenset(
    """
    a an and or the to of in on at for with is are was be been this that it its
    as by from into out up down my me i you your we our us he she they them do
    does did not no yes can could will would should shall may might must want
    wants need needs help please some any all over under about s
    """.split()
)

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    """Case-folded alphanumeric tokens with stopwords removed."""
    return [t for t in _TOKEN_RE.findall(text.casefold()) if t not in STOPWORDS]


def token_set(text: str) -> set[str]:
    return set(tokenize(text))


def canonical_json(obj: Any) -> str:
    """Stable serialization: sorted keys, no whitespace, ASCII only."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def payload_hash(obj: Any) -> str:
    """Hex digest of the canonical serialization, used to key scripted fixtures."""
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()[:16]


def new_id(prefix: str) -> str:
    return f"{prefix}-{uuid.uuid4().hex[:12]}"


def rfc3339(ts: float) -> str:
    """Epoch seconds to an RFC 3339 UTC timestamp."""
    return (
        datetime.fromtimestamp(ts, tz=timezone.utc)
        .isoformat(timespec="seconds")
        .replace("+00:00", "Z")
    )


class Clock:
    """Wall clock. Everything time-dependent takes one of these so tests can
    substitute a :class:`MockClock`."""

    def now(self) -> float:
        import time

        return time.time()


class MockClock(Clock):
    def __init__(self, start: float = 0.0):
        self._now = float(start)
        self._lock = threading.Lock()

    def now(self) -> float:
        with self._lock:
            return self._now

    def advance(self, seconds: float) -> float:
        with self._lock:
            self._now += seconds
            return self._now

    def set(self, t: float) -> None:
        with self._lock:
            self._now = float(t)
