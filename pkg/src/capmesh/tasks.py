"""Task domain types shared by reception, planning, and the workflow engine."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

TASK_STATUSES = ("completed", "failed", "needs_tool")


@dataclass(frozen=True)
class UserRequest:
    request_id: str
    user_id: str
    text: str
    submitted_at: str  # RFC 3339 UTC


@dataclass(frozen=True)
class StructuredTask:
    task_id: str
    request_id: str
    user_id: str
    intent: str
    entities: dict[str, str]
    constraints: list[str]
    raw_text: str

    def to_document(self) -> dict[str, Any]:
        return {
            "task_id": self.task_id,
            "request_id": self.request_id,
            "user_id": self.user_id,
            "intent": self.intent,
            "entities": dict(self.entities),
            "constraints": list(self.constraints),
            "raw_text": self.raw_text,
        }

    @classmethod
    def from_document(cls, doc: dict[str, Any]) -> "StructuredTask":
        return cls(
            task_id=doc["task_id"],
            request_id=doc.get("request_id", ""),
            user_id=doc.get("user_id", ""),
            intent=doc.get("intent", "unknown"),
            entities=dict(doc.get("entities", {})),
            constraints=list(doc.get("constraints", [])),
            raw_text=doc.get("raw_text", ""),
        )

    def planning_view(self) -> dict[str, Any]:
        """Content the planner sees; excludes volatile identifiers so reasoner
        payloads hash identically across submissions of the same text."""
        return {
            "intent": self.intent,
            "entities": dict(self.entities),
            "constraints": list(self.constraints),
            "raw_text": self.raw_text,
        }


@dataclass
class TaskResult:
    task_id: str
    status: str  # completed | failed | needs_tool
    summary: str
    payload: dict[str, Any] = field(default_factory=dict)
    trace_ref: str = ""

    def to_document(self) -> dict[str, Any]:
        return {
            "task_id": self.task_id,
            "status": self.status,
            "summary": self.summary,
            "payload": self.payload,
            "trace_ref": self.trace_ref,
        }

    @classmethod
    def from_document(cls, doc: dict[str, Any]) -> "TaskResult":
        return cls(
            task_id=doc["task_id"],
            status=doc["status"],
            summary=doc.get("summary", ""),
            payload=dict(doc.get("payload", {})),
            trace_ref=doc.get("trace_ref", ""),
        )
