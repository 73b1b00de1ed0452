"""Profile capability: namespaced key-value store for configuration the
workflows consult (user home address, system accounts). This is the system's
long-term memory; per-request state lives in workflow instances instead.
"""

from __future__ import annotations

import json
import sqlite3
import threading
from typing import Any

from .util import Clock, canonical_json

MAX_VALUE_BYTES = 64 * 1024


class ProfileStore:
    """Values are strings or small structured records, persisted in SQLite so
    they survive restarts. ``path=":memory:"`` gives an ephemeral store."""

    def __init__(self, path: str = ":memory:", clock: Clock | None = None):
        self._clock = clock or Clock()
        self._lock = threading.Lock()
        self._db = sqlite3.connect(path, check_same_thread=False)
        with self._lock:
            self._db.execute(
                """
                CREATE TABLE IF NOT EXISTS profiles (
                    namespace TEXT NOT NULL,
                    key TEXT NOT NULL,
                    value TEXT NOT NULL,
                    updated_at REAL NOT NULL,
                    PRIMARY KEY (namespace, key)
                )
                """
            )
            self._db.commit()

    def put(self, namespace: str, key: str, value: Any) -> dict[str, Any]:
        if not key:
            raise ValueError("profile key must be non-empty")
        encoded = canonical_json(value)
        if len(encoded.encode("utf-8")) > MAX_VALUE_BYTES:
            raise ValueError(
                f"profile value exceeds {MAX_VALUE_BYTES} bytes; "
                "this store holds configuration, not blobs"
            )
        now = self._clock.now()
        with self._lock:
            self._db.execute(
                "INSERT INTO profiles (namespace, key, value, updated_at) "
                "VALUES (?, ?, ?, ?) "
                "ON CONFLICT(namespace, key) DO UPDATE SET value=excluded.value, "
                "updated_at=excluded.updated_at",
                (namespace, key, encoded, now),
            )
            self._db.commit()
        return {"namespace": namespace, "key": key, "value": value, "updated_at": now}

    def get(self, namespace: str, key: str) -> Any | None:
        """Returns the stored value, or None when absent (absence is a normal
        outcome, not an error)."""
        with self._lock:
            row = self._db.execute(
                "SELECT value FROM profiles WHERE namespace = ? AND key = ?",
                (namespace, key),
            ).fetchone()
        if row is None:
            return None
        return json.loads(row[0])

    def delete(self, namespace: str, key: str) -> bool:
        with self._lock:
            cur = self._db.execute(
                "DELETE FROM profiles WHERE namespace = ? AND key = ?",
                (namespace, key),
            )
            self._db.commit()
        return cur.rowcount > 0

    def entries(self, namespace: str | None = None) -> list[dict[str, Any]]:
        query = "SELECT namespace, key, value, updated_at FROM profiles"
        args: tuple[Any, ...] = ()
        if namespace is not None:
            query += " WHERE namespace = ?"
            args = (namespace,)
        with self._lock:
            rows = self._db.execute(query + " ORDER BY namespace, key", args).fetchall()
        return [
            {"namespace": ns, "key": k, "value": json.loads(v), "updated_at": ts}
            for ns, k, v, ts in rows
        ]

    def close(self) -> None:
        with self._lock:
            self._db.close()
