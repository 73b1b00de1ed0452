"""Methodology capability: versioned expert-knowledge records and the
matching logic that picks the best record for a structured task.

A methodology bundles seven kinds of expert input (description, process
steps, decision points, rules, exceptions, suggestions, references) plus an
``intent`` label and optional per-intent keywords so tasks can find it
deterministically.

Process steps carry ``title``, ``description``, ``required_data`` and
``produces``; optional wiring fields (``source``, ``binding``, ``for_each``,
``item_outputs``, ``keep_if``, ``keep_value``) let experts state how a step
maps onto profile lookups, tool invocations, or per-item loops. Plan
derivation consumes these verbatim.
"""

from __future__ import annotations

import json
import sqlite3
import threading
from dataclasses import dataclass, field
from typing import Any

from . import conditions
from .errors import BadPosition, UnknownMethodology, ValidationError, VersionConflict
from .tasks import StructuredTask
from .util import Clock, canonical_json, rfc3339, token_set

STEP_SOURCES = ("profile", "tool", "internal")

# Planning consumes only the knowledge content, not audit metadata, so plans
# and scripted fixtures stay stable across re-saves that change nothing.
PLANNING_FIELDS = (
    "methodology_id",
    "intent",
    "description",
    "process_steps",
    "decision_points",
    "rules",
    "exceptions",
    "suggestions",
)


@dataclass
class Methodology:
    methodology_id: str
    intent: str
    description: str
    process_steps: list[dict[str, Any]]
    decision_points: list[dict[str, Any]] = field(default_factory=list)
    rules: list[str] = field(default_factory=list)
    exceptions: list[dict[str, Any]] = field(default_factory=list)
    suggestions: list[str] = field(default_factory=list)
    references: list[dict[str, Any]] = field(default_factory=list)
    intent_keywords: list[str] = field(default_factory=list)
    version: int = 0
    updated_by: str = ""
    updated_at: str = ""

    def to_document(self) -> dict[str, Any]:
        return {
            "methodology_id": self.methodology_id,
            "intent": self.intent,
            "description": self.description,
            "process_steps": self.process_steps,
            "decision_points": self.decision_points,
            "rules": self.rules,
            "exceptions": self.exceptions,
            "suggestions": self.suggestions,
            "references": self.references,
            "intent_keywords": self.intent_keywords,
            "version": self.version,
            "updated_by": self.updated_by,
            "updated_at": self.updated_at,
        }

    @classmethod
    def from_document(cls, doc: dict[str, Any]) -> "Methodology":
        return cls(
            methodology_id=doc.get("methodology_id", ""),
            intent=doc.get("intent", ""),
            description=doc.get("description", ""),
            process_steps=list(doc.get("process_steps", [])),
            decision_points=list(doc.get("decision_points", [])),
            rules=list(doc.get("rules", [])),
            exceptions=list(doc.get("exceptions", [])),
            suggestions=list(doc.get("suggestions", [])),
            references=list(doc.get("references", [])),
            intent_keywords=list(doc.get("intent_keywords", [])),
            version=int(doc.get("version", 0)),
            updated_by=doc.get("updated_by", ""),
            updated_at=doc.get("updated_at", ""),
        )

    def planning_view(self) -> dict[str, Any]:
        doc = self.to_document()
        return {k: doc[k] for k in PLANNING_FIELDS}


def validate_methodology(doc: Methodology) -> list[str]:
    """Every invariant violation, not just the first."""
    problems: list[str] = []
    if not doc.intent:
        problems.append("intent must be non-empty")
    if not doc.process_steps:
        problems.append("process_steps must be non-empty")
    for i, step in enumerate(doc.process_steps):
        where = f"process_steps[{i}]"
        if not isinstance(step, dict):
            problems.append(f"{where}: must be an object")
            continue
        if not step.get("title"):
            problems.append(f"{where}: title must be non-empty")
        source = step.get("source", "tool")
        if source not in STEP_SOURCES:
            problems.append(f"{where}: source must be one of {STEP_SOURCES}")
        for list_field in ("required_data", "produces"):
            value = step.get(list_field, [])
            if not isinstance(value, list) or not all(isinstance(x, str) for x in value):
                problems.append(f"{where}: {list_field} must be a list of strings")
        if step.get("binding") is not None and not isinstance(step.get("binding", {}), dict):
            problems.append(f"{where}: binding must be an object")
        keep_if = step.get("keep_if")
        if keep_if and not conditions.is_valid(keep_if):
            problems.append(f"{where}: keep_if does not parse: {keep_if!r}")
        if step.get("keep_if") and not step.get("for_each"):
            problems.append(f"{where}: keep_if requires for_each")
        if step.get("for_each") and not step.get("produces"):
            problems.append(f"{where}: for_each steps must declare produces")
    for i, dp in enumerate(doc.decision_points):
        after = dp.get("after_step")
        if not isinstance(after, int) or not (0 <= after < len(doc.process_steps)):
            problems.append(f"decision_points[{i}]: after_step out of range")
    if not all(isinstance(r, str) for r in doc.rules):
        problems.append("rules must be strings")
    return problems


def overlap_score(text: str, description: str) -> int:
    """Case-folded token intersection count, stopwords removed."""
    return len(token_set(text) & token_set(description))


class MethodologyStore:
    """Versioned store: every mutation appends an immutable version; stale
    writes are rejected with VersionConflict instead of last-writer-wins."""

    def __init__(
        self,
        path: str = ":memory:",
        clock: Clock | None = None,
        match_threshold: int = 1,
    ):
        self._clock = clock or Clock()
        self._lock = threading.Lock()
        self._match_threshold = match_threshold
        self._db = sqlite3.connect(path, check_same_thread=False)
        with self._lock:
            self._db.execute(
                """
                CREATE TABLE IF NOT EXISTS methodologies (
                    methodology_id TEXT NOT NULL,
                    version INTEGER NOT NULL,
                    doc TEXT NOT NULL,
                    PRIMARY KEY (methodology_id, version)
                )
                """
            )
            self._db.commit()

    # -- persistence helpers ---------------------------------------------

    def _head_version(self, methodology_id: str) -> int:
        row = self._db.execute(
            "SELECT MAX(version) FROM methodologies WHERE methodology_id = ?",
            (methodology_id,),
        ).fetchone()
        return row[0] or 0

    def _store(self, doc: Methodology) -> None:
        self._db.execute(
            "INSERT INTO methodologies (methodology_id, version, doc) VALUES (?, ?, ?)",
            (doc.methodology_id, doc.version, canonical_json(doc.to_document())),
        )
        self._db.commit()

    # -- operations --------------------------------------------------------

    def upsert_methodology(self, doc: Methodology, expert_id: str) -> tuple[str, int]:
        """Stores a new version. ``doc.version`` must equal the current head
        (0 for a new record); anything else is a stale write."""
        problems = validate_methodology(doc)
        if problems:
            raise ValidationError(problems)
        if not doc.methodology_id:
            raise ValidationError(["methodology_id must be non-empty"])
        with self._lock:
            head = self._head_version(doc.methodology_id)
            if doc.version != head:
                raise VersionConflict(
                    f"{doc.methodology_id}: expected version {head}, got {doc.version}"
                )
            doc.version = head + 1
            doc.updated_by = expert_id
            doc.updated_at = rfc3339(self._clock.now())
            self._store(doc)
            return doc.methodology_id, doc.version

    def get(self, methodology_id: str, version: int | None = None) -> Methodology:
        with self._lock:
            if version is None:
                version = self._head_version(methodology_id)
            row = self._db.execute(
                "SELECT doc FROM methodologies WHERE methodology_id = ? AND version = ?",
                (methodology_id, version),
            ).fetchone()
        if row is None:
            raise UnknownMethodology(f"{methodology_id} (version {version})")
        return Methodology.from_document(json.loads(row[0]))

    def get_document(self, methodology_id: str, version: int | None = None) -> str:
        """Raw canonical JSON of a stored version (byte-identical forever)."""
        with self._lock:
            if version is None:
                version = self._head_version(methodology_id)
            row = self._db.execute(
                "SELECT doc FROM methodologies WHERE methodology_id = ? AND version = ?",
                (methodology_id, version),
            ).fetchone()
        if row is None:
            raise UnknownMethodology(f"{methodology_id} (version {version})")
        return row[0]

    def insert_step(
        self, methodology_id: str, position: int, step: dict[str, Any], expert_id: str
    ) -> int:
        """Insert a process step; decision points at or after the position
        shift by one so they keep pointing at the same step."""
        with self._lock:
            head = self._head_version(methodology_id)
            if head == 0:
                raise UnknownMethodology(methodology_id)
            row = self._db.execute(
                "SELECT doc FROM methodologies WHERE methodology_id = ? AND version = ?",
                (methodology_id, head),
            ).fetchone()
            doc = Methodology.from_document(json.loads(row[0]))
            if not (0 <= position <= len(doc.process_steps)):
                raise BadPosition(
                    f"position {position} not in [0, {len(doc.process_steps)}]"
                )
            doc.process_steps = (
                doc.process_steps[:position] + [step] + doc.process_steps[position:]
            )
            for dp in doc.decision_points:
                if dp.get("after_step", 0) >= position:
                    dp["after_step"] = dp["after_step"] + 1
            problems = validate_methodology(doc)
            if problems:
                raise ValidationError(problems)
            doc.version = head + 1
            doc.updated_by = expert_id
            doc.updated_at = rfc3339(self._clock.now())
            self._store(doc)
            return doc.version

    def delete_step(self, methodology_id: str, position: int, expert_id: str) -> int:
        with self._lock:
            head = self._head_version(methodology_id)
            if head == 0:
                raise UnknownMethodology(methodology_id)
            row = self._db.execute(
                "SELECT doc FROM methodologies WHERE methodology_id = ? AND version = ?",
                (methodology_id, head),
            ).fetchone()
            doc = Methodology.from_document(json.loads(row[0]))
            if not (0 <= position < len(doc.process_steps)):
                raise BadPosition(
                    f"position {position} not in [0, {len(doc.process_steps)})"
                )
            doc.process_steps = (
                doc.process_steps[:position] + doc.process_steps[position + 1 :]
            )
            for dp in doc.decision_points:
                if dp.get("after_step", 0) > position:
                    dp["after_step"] = dp["after_step"] - 1
            problems = validate_methodology(doc)
            if problems:
                raise ValidationError(problems)
            doc.version = head + 1
            doc.updated_by = expert_id
            doc.updated_at = rfc3339(self._clock.now())
            self._store(doc)
            return doc.version

    def list_latest(self) -> list[Methodology]:
        with self._lock:
            rows = self._db.execute(
                "SELECT doc FROM methodologies m WHERE version = "
                "(SELECT MAX(version) FROM methodologies WHERE methodology_id = m.methodology_id) "
                "ORDER BY methodology_id"
            ).fetchall()
        return [Methodology.from_document(json.loads(r[0])) for r in rows]

    def intent_lexicon(self) -> dict[str, list[str]]:
        """Intent label -> sorted keyword list, over the latest versions."""
        lexicon: dict[str, set[str]] = {}
        for doc in self.list_latest():
            lexicon.setdefault(doc.intent, set()).update(
                k.casefold() for k in doc.intent_keywords
            )
        return {intent: sorted(words) for intent, words in lexicon.items()}

    def match_methodology(self, task: StructuredTask) -> Methodology | None:
        """Exact intent match wins; ties resolved by keyword overlap between
        the task text and the description, then by methodology_id. Without an
        intent match, the best overlap must exceed the threshold."""
        candidates = self.list_latest()
        if not candidates:
            return None
        raw_text = task.raw_text
        same_intent = [m for m in candidates if m.intent == task.intent]
        pool = same_intent or candidates
        scored = sorted(
            pool,
            key=lambda m: (-overlap_score(raw_text, m.description), m.methodology_id),
        )
        best = scored[0]
        if same_intent:
            return best
        if overlap_score(raw_text, best.description) > self._match_threshold:
            return best
        return None

    def close(self) -> None:
        with self._lock:
            self._db.close()
