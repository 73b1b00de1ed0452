"""Completion interface shared by every reasoner backend."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Protocol

_PAYLOAD_KEYS = {
    "structure_task": {"text", "intent_lexicon", "entity_rules"},
    "generate_plan": {"task", "methodology"},
    "rank_tools": {"step_description", "candidates"},
}

KINDS = tuple(sorted(_PAYLOAD_KEYS))


@dataclass(frozen=True)
class ReasonerRequest:
    kind: str
    payload: dict[str, Any]
    budget: int = 0  # max response size in characters; 0 = unlimited

    def __post_init__(self) -> None:
        expected = _PAYLOAD_KEYS.get(self.kind)
        if expected is None:
            raise ValueError(f"unknown reasoner request kind {self.kind!r}")
        missing = expected - set(self.payload)
        if missing:
            raise ValueError(
                f"{self.kind} payload missing keys: {', '.join(sorted(missing))}"
            )


@dataclass(frozen=True)
class ReasonerResponse:
    text: str
    backend: str
    deterministic: bool


class Reasoner(Protocol):
    """Anything with a complete() method; backends are interchangeable."""

    def complete(self, req: ReasonerRequest) -> ReasonerResponse:  # pragma: no cover
        ...


@dataclass
class ReasonerConfig:
    backend: str = "rules"  # scripted | rules | gateway
    script_path: str | None = None
    gateway_url: str | None = None
    timeout_ms: int = 10_000
    max_in_flight: int = 4
    extra: dict[str, Any] = field(default_factory=dict)
