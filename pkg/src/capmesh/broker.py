"""Tool broker: represents one or more tool services, performs their
(manually initiated) registration with the registry, and keeps them alive
with periodic heartbeats.

The managed set is stored durably so a broker restart does not lose
registrations. Heartbeats only ever list services whose health probe passed.
"""

from __future__ import annotations

import json
import logging
import random
import sqlite3
import threading
import time
from dataclasses import dataclass
from typing import Any, Callable, Protocol

from .errors import ProbeUnhealthy, RegistryUnreachable, ValidationError
from .registry import ToolDescriptor, validate_descriptor
from .util import Clock

log = logging.getLogger(__name__)


class RegistryClient(Protocol):
    """What the broker needs from the registry (in-process or HTTP)."""

    def register_tool(self, desc: ToolDescriptor, broker_id: str) -> str:  # pragma: no cover
        ...

    def heartbeat(
        self, broker_id: str, tool_ids: list[str], timestamp: float | None = None
    ) -> dict[str, list[str]]:  # pragma: no cover
        ...


@dataclass
class ManagedService:
    descriptor: ToolDescriptor
    health_probe: str
    last_probe_ok: bool = False
    registered: bool = False
    needs_reregister: bool = False

    def to_document(self) -> dict[str, Any]:
        return {
            "descriptor": self.descriptor.to_document(),
            "health_probe": self.health_probe,
            "last_probe_ok": self.last_probe_ok,
            "registered": self.registered,
            "needs_reregister": self.needs_reregister,
        }


def http_probe(url: str, timeout_s: float = 2.0) -> bool:
    """Default health probe: GET returning 2xx within the timeout."""
    import httpx

    try:
        return httpx.get(url, timeout=timeout_s).status_code // 100 == 2
    except httpx.HTTPError:
        return False


class ToolBroker:
    def __init__(
        self,
        broker_id: str,
        registry: RegistryClient,
        db_path: str = ":memory:",
        clock: Clock | None = None,
        probe: Callable[[str], bool] = http_probe,
        heartbeat_interval_s: float = 10.0,
        jitter_fraction: float = 0.1,
        register_attempts: int = 3,
        backoff_base_s: float = 0.5,
        sleep: Callable[[float], None] = time.sleep,
        jitter_seed: int | None = None,
    ):
        self.broker_id = broker_id
        self._registry = registry
        self._clock = clock or Clock()
        self._probe = probe
        self._interval = heartbeat_interval_s
        self._jitter_fraction = jitter_fraction
        self._register_attempts = register_attempts
        self._backoff_base = backoff_base_s
        self._sleep = sleep
        self._rng = random.Random(jitter_seed if jitter_seed is not None else broker_id)
        self._lock = threading.RLock()
        self._managed: dict[str, ManagedService] = {}
        self._runner: threading.Thread | None = None
        self._stop = threading.Event()
        self._db = sqlite3.connect(db_path, check_same_thread=False)
        self._db.execute(
            "CREATE TABLE IF NOT EXISTS managed (tool_id TEXT PRIMARY KEY, doc TEXT NOT NULL)"
        )
        self._db.commit()
        self._load()

    # -- durability -----------------------------------------------------------

    def _load(self) -> None:
        for (doc_text,) in self._db.execute("SELECT doc FROM managed"):
            doc = json.loads(doc_text)
            entry = ManagedService(
                descriptor=ToolDescriptor.from_document(doc["descriptor"]),
                health_probe=doc["health_probe"],
                last_probe_ok=doc.get("last_probe_ok", False),
                registered=doc.get("registered", False),
                needs_reregister=doc.get("needs_reregister", False),
            )
            self._managed[entry.descriptor.tool_id] = entry

    def _persist(self, entry: ManagedService) -> None:
        self._db.execute(
            "INSERT INTO managed (tool_id, doc) VALUES (?, ?) "
            "ON CONFLICT(tool_id) DO UPDATE SET doc=excluded.doc",
            (entry.descriptor.tool_id, json.dumps(entry.to_document())),
        )
        self._db.commit()

    # -- provider API --------------------------------------------------------------

    def add_service(self, desc: ToolDescriptor, health_probe: str) -> ManagedService:
        """Store the service locally; registration stays a separate, manual
        step initiated by the provider."""
        problems = validate_descriptor(desc)
        if problems:
            raise ValidationError(problems)
        with self._lock:
            if desc.tool_id in self._managed:
                raise ValidationError([f"tool {desc.tool_id!r} already managed"])
            entry = ManagedService(descriptor=desc, health_probe=health_probe)
            entry.last_probe_ok = self._probe(health_probe)
            self._managed[desc.tool_id] = entry
            self._persist(entry)
            return entry

    def register_managed(self, tool_id: str) -> str:
        """Register one managed, probe-healthy service with the registry;
        heartbeating covers it from the next cycle on."""
        with self._lock:
            entry = self._managed.get(tool_id)
            if entry is None:
                raise ValidationError([f"tool {tool_id!r} is not managed"])
            entry.last_probe_ok = self._probe(entry.health_probe)
            if not entry.last_probe_ok:
                self._persist(entry)
                raise ProbeUnhealthy(f"{tool_id} probe failed: {entry.health_probe}")
            last_error: Exception | None = None
            for attempt in range(self._register_attempts):
                try:
                    self._registry.register_tool(entry.descriptor, self.broker_id)
                    entry.registered = True
                    entry.needs_reregister = False
                    self._persist(entry)
                    return tool_id
                except (ValidationError,):
                    raise
                except Exception as exc:  # transport-level failure
                    last_error = exc
                    delay = min(self._backoff_base * (2**attempt), 2.0)
                    log.warning(
                        "registry unreachable registering %s (attempt %d): %s; "
                        "retrying in %.1fs",
                        tool_id,
                        attempt + 1,
                        exc,
                        delay,
                    )
                    self._sleep(delay)
            raise RegistryUnreachable(str(last_error))

    def list_services(self) -> list[ManagedService]:
        with self._lock:
            return [self._managed[tid] for tid in sorted(self._managed)]

    # -- liveness loop ----------------------------------------------------------------

    def probe_all(self) -> dict[str, bool]:
        results = {}
        with self._lock:
            entries = list(self._managed.values())
        for entry in entries:
            ok = self._probe(entry.health_probe)
            with self._lock:
                entry.last_probe_ok = ok
                self._persist(entry)
            results[entry.descriptor.tool_id] = ok
        return results

    def heartbeat_cycle(self, now: float | None = None) -> dict[str, list[str]]:
        """One cycle: re-register anything the registry flagged unknown, then
        send a single heartbeat listing every probe-healthy registered tool."""
        ts = self._clock.now() if now is None else now
        with self._lock:
            for entry in list(self._managed.values()):
                if entry.needs_reregister and entry.last_probe_ok:
                    try:
                        self._registry.register_tool(entry.descriptor, self.broker_id)
                        entry.registered = True
                        entry.needs_reregister = False
                        self._persist(entry)
                    except Exception as exc:
                        log.warning(
                            "re-registration of %s failed: %s",
                            entry.descriptor.tool_id,
                            exc,
                        )
            healthy = [
                tid
                for tid in sorted(self._managed)
                if self._managed[tid].registered and self._managed[tid].last_probe_ok
            ]
        if not healthy:
            return {"acknowledged": [], "unknown": []}
        try:
            reply = self._registry.heartbeat(self.broker_id, healthy, ts)
        except Exception as exc:
            log.warning("heartbeat failed: %s", exc)
            return {"acknowledged": [], "unknown": []}
        with self._lock:
            for tool_id in reply.get("unknown", []):
                entry = self._managed.get(tool_id)
                if entry is not None:
                    entry.registered = False
                    entry.needs_reregister = True
                    self._persist(entry)
        return reply

    def next_interval(self) -> float:
        """Heartbeat cadence: interval plus bounded jitter (<= 10%)."""
        jitter = self._rng.uniform(-self._jitter_fraction, self._jitter_fraction)
        return self._interval * (1.0 + jitter)

    def start_background(self) -> None:
        if self._runner is not None:
            return
        self._stop.clear()

        def run() -> None:
            while not self._stop.wait(self.next_interval()):
                try:
                    self.probe_all()
                    self.heartbeat_cycle()
                except Exception:  # keep the loop alive
                    log.exception("heartbeat cycle failed")

        self._runner = threading.Thread(target=run, name=f"broker-{self.broker_id}", daemon=True)
        self._runner.start()

    def stop_background(self) -> None:
        if self._runner is not None:
            self._stop.set()
            self._runner.join(timeout=5)
            self._runner = None
