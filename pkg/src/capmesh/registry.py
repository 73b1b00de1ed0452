"""Tool capability: registry and discovery center.

Brokers register tool descriptors and keep them alive with heartbeats; the
workflow engine asks ``discover`` for the best tool for a step. Selection is
a deterministic weighted score over description overlap, output coverage, and
parameter resolvability; an optional reasoner assist may only reorder tools
whose scores sit within epsilon of the maximum, so selection stays
reproducible.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from typing import Any
from urllib.parse import urlparse

from .errors import (
    DuplicateToolOtherBroker,
    NoToolFound,
    UnknownBroker,
    ValidationError,
)
from .reasoner import Reasoner, ReasonerRequest
from .util import Clock, token_set

PARAM_TYPES = ("string", "number", "boolean", "list", "object")
TOOL_STATES = ("available", "suspect", "unavailable")


@dataclass
class RegistryConfig:
    heartbeat_interval_s: float = 10.0
    miss_threshold: int = 2      # intervals of silence before suspect
    evict_threshold: int = 3     # intervals of silence before unavailable
    retention_s: float = 86_400.0  # unavailable tools older than this are deleted
    weight_description: float = 0.6
    weight_outputs: float = 0.25
    weight_params: float = 0.15
    score_threshold: float = 0.2
    reasoner_assist: bool = False
    epsilon: float = 0.05


@dataclass
class ToolDescriptor:
    tool_id: str
    name: str
    description: str
    tags: list[str]
    endpoint: str
    params: list[dict[str, Any]]
    output_schema: list[dict[str, Any]]
    broker_id: str = ""
    state: str = "available"
    last_heartbeat_at: float = 0.0
    registered_at: float = 0.0
    version: int = 1

    def to_document(self) -> dict[str, Any]:
        return {
            "tool_id": self.tool_id,
            "name": self.name,
            "description": self.description,
            "tags": list(self.tags),
            "endpoint": self.endpoint,
            "params": [dict(p) for p in self.params],
            "output_schema": [dict(p) for p in self.output_schema],
            "broker_id": self.broker_id,
            "state": self.state,
            "last_heartbeat_at": self.last_heartbeat_at,
            "registered_at": self.registered_at,
            "version": self.version,
        }

    @classmethod
    def from_document(cls, doc: dict[str, Any]) -> "ToolDescriptor":
        return cls(
            tool_id=doc["tool_id"],
            name=doc.get("name", doc["tool_id"]),
            description=doc.get("description", ""),
            tags=list(doc.get("tags", [])),
            endpoint=doc.get("endpoint", ""),
            params=[dict(p) for p in doc.get("params", [])],
            output_schema=[dict(p) for p in doc.get("output_schema", [])],
            broker_id=doc.get("broker_id", ""),
            state=doc.get("state", "available"),
            last_heartbeat_at=float(doc.get("last_heartbeat_at", 0.0)),
            registered_at=float(doc.get("registered_at", 0.0)),
            version=int(doc.get("version", 1)),
        )


def validate_descriptor(desc: ToolDescriptor) -> list[str]:
    problems: list[str] = []
    if not desc.tool_id:
        problems.append("tool_id must be non-empty")
    parsed = urlparse(desc.endpoint)
    if parsed.scheme not in ("http", "https", "inproc") or not parsed.netloc:
        problems.append(f"endpoint is not a valid URL: {desc.endpoint!r}")
    for side, params in (("params", desc.params), ("output_schema", desc.output_schema)):
        names: set[str] = set()
        for p in params:
            name = p.get("name", "")
            if not name:
                problems.append(f"{side}: parameter without a name")
            if name in names:
                problems.append(f"{side}: duplicate parameter name {name!r}")
            names.add(name)
            if p.get("type") not in PARAM_TYPES:
                problems.append(
                    f"{side}.{name}: type must be one of {PARAM_TYPES}"
                )
    return problems


@dataclass(frozen=True)
class DiscoveryResult:
    selected: str
    bound_params: dict[str, str | None]  # param name -> context key, None = unresolved
    score: float
    alternatives: list[tuple[str, float]]

    def to_document(self) -> dict[str, Any]:
        return {
            "selected": self.selected,
            "bound_params": dict(self.bound_params),
            "score": self.score,
            "alternatives": [[tid, s] for tid, s in self.alternatives],
        }


def _type_compatible(param_type: str, context_type: str | None) -> bool:
    if context_type is None:
        return True
    return param_type == context_type


def json_type_of(value: Any) -> str | None:
    if isinstance(value, bool):
        return "boolean"
    if isinstance(value, (int, float)):
        return "number"
    if isinstance(value, str):
        return "string"
    if isinstance(value, list):
        return "list"
    if isinstance(value, dict):
        return "object"
    return None


def normalize_context_keys(context_keys: list[Any]) -> list[tuple[str, str | None]]:
    """Accepts plain names or ``{"name", "type"}`` records."""
    normalized: list[tuple[str, str | None]] = []
    for entry in context_keys:
        if isinstance(entry, str):
            normalized.append((entry, None))
        else:
            normalized.append((entry["name"], entry.get("type")))
    return normalized


def resolve_param(
    param: dict[str, Any], context_keys: list[tuple[str, str | None]]
) -> str | None:
    """Bind one tool parameter to a context key: exact name match first, then
    the key whose name tokens best overlap the parameter's name+description
    (type-compatible only). Ties break on the lexicographically smaller key."""
    for key, ctype in context_keys:
        if key == param["name"] and _type_compatible(param.get("type", "string"), ctype):
            return key
    param_tokens = token_set(param["name"].replace("_", " ")) | token_set(
        param.get("description", "")
    )
    best_key: str | None = None
    best_overlap = 0
    for key, ctype in sorted(context_keys, key=lambda kv: kv[0]):
        if not _type_compatible(param.get("type", "string"), ctype):
            continue
        overlap = len(token_set(key.replace("_", " ")) & param_tokens)
        if overlap > best_overlap:
            best_key, best_overlap = key, overlap
    return best_key


def score_tool(
    desc: ToolDescriptor,
    step_description: str,
    context_keys: list[tuple[str, str | None]],
    required_outputs: list[str],
    config: RegistryConfig,
) -> float:
    """Deterministic weighted score; the independent acceptance oracle
    re-implements this formula from scratch."""
    step_tokens = token_set(step_description)
    tool_tokens = token_set(desc.description + " " + " ".join(desc.tags))
    description_part = (
        len(step_tokens & tool_tokens) / len(step_tokens) if step_tokens else 0.0
    )

    if required_outputs:
        schema_names = {p["name"] for p in desc.output_schema}
        outputs_part = sum(1 for o in required_outputs if o in schema_names) / len(
            required_outputs
        )
    else:
        outputs_part = 1.0

    required_params = [p for p in desc.params if p.get("required", False)]
    if required_params:
        resolved = sum(
            1 for p in required_params if resolve_param(p, context_keys) is not None
        )
        params_part = resolved / len(required_params)
    else:
        params_part = 1.0

    return (
        config.weight_description * description_part
        + config.weight_outputs * outputs_part
        + config.weight_params * params_part
    )


class ToolRegistry:
    """Thread-safe in-memory registry with injected clock for liveness."""

    def __init__(
        self,
        config: RegistryConfig | None = None,
        clock: Clock | None = None,
        reasoner: Reasoner | None = None,
    ):
        self.config = config or RegistryConfig()
        self._clock = clock or Clock()
        self._reasoner = reasoner
        self._lock = threading.RLock()
        self._tools: dict[str, ToolDescriptor] = {}
        self._brokers: set[str] = set()

    # -- registration ---------------------------------------------------------

    def register_tool(self, desc: ToolDescriptor, broker_id: str) -> str:
        problems = validate_descriptor(desc)
        if problems:
            raise ValidationError(problems)
        now = self._clock.now()
        with self._lock:
            existing = self._tools.get(desc.tool_id)
            if existing is not None and existing.broker_id != broker_id:
                raise DuplicateToolOtherBroker(
                    f"{desc.tool_id} already registered by broker {existing.broker_id}"
                )
            desc.broker_id = broker_id
            desc.state = "available"
            desc.last_heartbeat_at = now
            desc.registered_at = existing.registered_at if existing else now
            desc.version = existing.version + 1 if existing else 1
            self._tools[desc.tool_id] = desc
            self._brokers.add(broker_id)
            return desc.tool_id

    def deregister_tool(self, tool_id: str) -> bool:
        with self._lock:
            return self._tools.pop(tool_id, None) is not None

    def get_tool(self, tool_id: str) -> ToolDescriptor | None:
        with self._lock:
            return self._tools.get(tool_id)

    def list_tools(self) -> list[ToolDescriptor]:
        with self._lock:
            return [self._tools[tid] for tid in sorted(self._tools)]

    # -- liveness -----------------------------------------------------------------

    def heartbeat(
        self, broker_id: str, tool_ids: list[str], timestamp: float | None = None
    ) -> dict[str, list[str]]:
        """Refresh liveness; evicted or never-registered ids come back in
        ``unknown`` so the broker knows to re-register them."""
        ts = self._clock.now() if timestamp is None else timestamp
        with self._lock:
            if broker_id not in self._brokers:
                raise UnknownBroker(broker_id)
            acknowledged: list[str] = []
            unknown: list[str] = []
            for tool_id in tool_ids:
                tool = self._tools.get(tool_id)
                if tool is None or tool.state == "unavailable":
                    unknown.append(tool_id)
                    continue
                if tool.broker_id != broker_id:
                    unknown.append(tool_id)
                    continue
                tool.last_heartbeat_at = max(tool.last_heartbeat_at, ts)
                if tool.state == "suspect":
                    tool.state = "available"
                acknowledged.append(tool_id)
            return {"acknowledged": acknowledged, "unknown": unknown}

    def sweep_stale(self, now: float | None = None) -> list[dict[str, str]]:
        """Demote tools whose heartbeats stopped: silent for more than
        miss_threshold intervals -> suspect, more than evict_threshold ->
        unavailable, unavailable past retention -> deleted."""
        ts = self._clock.now() if now is None else now
        cfg = self.config
        suspect_after = cfg.miss_threshold * cfg.heartbeat_interval_s
        evict_after = cfg.evict_threshold * cfg.heartbeat_interval_s
        changes: list[dict[str, str]] = []
        with self._lock:
            for tool_id in sorted(self._tools):
                tool = self._tools[tool_id]
                silent = ts - tool.last_heartbeat_at
                if silent > evict_after + cfg.retention_s:
                    del self._tools[tool_id]
                    changes.append({"tool_id": tool_id, "from": tool.state, "to": "deleted"})
                elif silent > evict_after and tool.state != "unavailable":
                    changes.append(
                        {"tool_id": tool_id, "from": tool.state, "to": "unavailable"}
                    )
                    tool.state = "unavailable"
                elif evict_after >= silent > suspect_after and tool.state == "available":
                    changes.append(
                        {"tool_id": tool_id, "from": tool.state, "to": "suspect"}
                    )
                    tool.state = "suspect"
        return changes

    # -- discovery ---------------------------------------------------------------

    def discover(
        self,
        step_description: str,
        context_keys: list[Any],
        required_outputs: list[str],
    ) -> DiscoveryResult:
        keys = normalize_context_keys(context_keys)
        with self._lock:
            available = [t for t in self._tools.values() if t.state == "available"]
            scored = sorted(
                (
                    (
                        score_tool(t, step_description, keys, required_outputs, self.config),
                        t,
                    )
                    for t in available
                ),
                key=lambda pair: (-pair[0], pair[1].tool_id),
            )
        if not scored or scored[0][0] < self.config.score_threshold:
            raise NoToolFound(
                f"no available tool reaches threshold "
                f"{self.config.score_threshold} for: {step_description}"
            )

        best_score = scored[0][0]
        selected = scored[0][1]
        if self.config.reasoner_assist and self._reasoner is not None and len(scored) > 1:
            selected = self._reasoner_pick(step_description, scored, best_score)

        bound = {
            p["name"]: resolve_param(p, keys)
            for p in selected.params
            if p.get("required", False)
        }
        selected_score = next(s for s, t in scored if t.tool_id == selected.tool_id)
        alternatives = [
            (t.tool_id, s) for s, t in scored if t.tool_id != selected.tool_id
        ]
        return DiscoveryResult(
            selected=selected.tool_id,
            bound_params=bound,
            score=selected_score,
            alternatives=alternatives,
        )

    def _reasoner_pick(
        self,
        step_description: str,
        scored: list[tuple[float, ToolDescriptor]],
        best_score: float,
    ) -> ToolDescriptor:
        """Advisory reordering, constrained to the epsilon band around the
        deterministic maximum; anything else from the reasoner is ignored."""
        band = {
            t.tool_id: t for s, t in scored if best_score - s <= self.config.epsilon
        }
        if len(band) <= 1:
            return scored[0][1]
        payload = {
            "step_description": step_description,
            "candidates": [
                {
                    "tool_id": t.tool_id,
                    "description": t.description,
                    "tags": list(t.tags),
                    "score": s,
                }
                for s, t in scored
                if t.tool_id in band
            ],
        }
        try:
            response = self._reasoner.complete(
                ReasonerRequest(kind="rank_tools", payload=payload)
            )
            ranked = json.loads(response.text).get("ranked", [])
        except Exception:
            return scored[0][1]
        for tool_id in ranked:
            if tool_id in band:
                return band[tool_id]
        return scored[0][1]
