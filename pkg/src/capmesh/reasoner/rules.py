"""Rule-based reasoner backend: deterministic completions computed from the
request payload alone.

This backend is the production fallback and the source of truth for the
scripted fixtures: the scripted backend replays completions this code produced
once, so both yield identical results by construction.
"""

from __future__ import annotations

import re
from typing import Any

from .. import conditions
from ..util import canonical_json, payload_hash, token_set
from .base import Reasoner, ReasonerRequest, ReasonerResponse


def structure_task(payload: dict[str, Any]) -> dict[str, Any]:
    """Pick an intent by keyword-lexicon match and extract entities by the
    configured pattern rules.

    Intent scoring counts lexicon keywords present in the query's token set;
    the highest count wins, ties resolved by lexicographic intent label, zero
    hits fall back to ``"unknown"``.
    """
    text = payload["text"]
    tokens = token_set(text)
    best_intent = "unknown"
    best_hits = 0
    for intent in sorted(payload["intent_lexicon"]):
        keywords = {str(k).casefold() for k in payload["intent_lexicon"][intent]}
        hits = len(tokens & keywords)
        if hits > best_hits:
            best_intent, best_hits = intent, hits

    entities: dict[str, str] = {}
    for rule in payload["entity_rules"]:
        name = rule["name"]
        if name in entities:
            continue
        m = re.search(rule["pattern"], text, re.IGNORECASE)
        if m:
            entities[name] = m.group(rule.get("group", 0))

    return {"intent": best_intent, "entities": entities, "constraints": []}


def _execute_step(step_id: str, ps: dict[str, Any]) -> dict[str, Any]:
    return {
        "step_id": step_id,
        "kind": "execute",
        "title": ps["title"],
        "description": ps.get("description", ps["title"]),
        "required_keys": list(ps.get("required_data", [])),
        "output_keys": list(ps.get("produces", [])),
        "source": ps.get("source", "tool"),
        "binding": dict(ps.get("binding", {})),
    }


def _loop_step(step_id: str, ps: dict[str, Any]) -> dict[str, Any]:
    produces = list(ps.get("produces", []))
    item_outputs = list(ps.get("item_outputs", produces))
    body: list[dict[str, Any]] = [
        {
            "step_id": f"{step_id}.call",
            "kind": "execute",
            "title": ps["title"],
            "description": ps.get("description", ps["title"]),
            "required_keys": ["item"],
            "output_keys": item_outputs,
            "source": ps.get("source", "tool"),
            "binding": dict(ps.get("binding", {})),
        }
    ]
    keep_if = ps.get("keep_if")
    if keep_if:
        keep_value = ps.get("keep_value", "{context.item}")
        collected = produces[0]
        body.append(
            {
                "step_id": f"{step_id}.filter",
                "kind": "branch",
                "title": f"Keep items where {keep_if}",
                "description": f"Collect the loop item only when {keep_if}",
                "required_keys": sorted(conditions.referenced_keys(keep_if)),
                "output_keys": [],
                "source": "internal",
                "binding": {},
                "branch": {
                    "condition": keep_if,
                    "then_steps": [
                        {
                            "step_id": f"{step_id}.keep",
                            "kind": "execute",
                            "title": "Collect item",
                            "description": "Record the current loop item in the result set",
                            "required_keys": ["item"],
                            "output_keys": [collected],
                            "source": "internal",
                            "binding": {collected: keep_value},
                        }
                    ],
                    "else_steps": [],
                },
            }
        )
    return {
        "step_id": step_id,
        "kind": "loop",
        "title": ps["title"],
        "description": ps.get("description", ps["title"]),
        "required_keys": list(ps.get("required_data", [])),
        "output_keys": produces,
        "source": "internal",
        "binding": {},
        "loop": {
            "over_key": ps["for_each"],
            "exported_keys": produces,
            "body_steps": body,
        },
    }


def derive_plan_document(payload: dict[str, Any]) -> dict[str, Any]:
    """Derive a plan document 1:1 from the methodology's process steps.

    Each process step becomes one top-level step; a step carrying ``for_each``
    becomes a loop whose body invokes the step once per item, optionally
    filtered by ``keep_if``. Decision points whose condition parses and only
    references declared data keys become branch steps; the rest are appended
    to the preceding step's description as advisory text.

    ``plan_id`` is a content hash of the payload so identical inputs always
    yield the identical document; ``task_id`` is left empty for the caller to
    stamp.
    """
    mdoc = payload["methodology"]
    declared: set[str] = set()
    for ps in mdoc.get("process_steps", []):
        declared.update(ps.get("required_data", []))
        declared.update(ps.get("produces", []))

    def usable(condition: Any) -> bool:
        return bool(
            condition
            and isinstance(condition, str)
            and conditions.is_valid(condition)
            and conditions.referenced_keys(condition) <= declared
        )

    # Expert rules that parse and reference declared keys can serve as the
    # condition of a decision point that states none; unusable rules stay
    # advisory text.
    usable_rules = [r for r in mdoc.get("rules", []) if usable(r)]

    decision_points = list(mdoc.get("decision_points", []))
    steps: list[dict[str, Any]] = []
    for idx, ps in enumerate(mdoc.get("process_steps", [])):
        step_id = f"s{idx + 1}"
        if ps.get("for_each"):
            step = _loop_step(step_id, ps)
        else:
            step = _execute_step(step_id, ps)
        steps.append(step)
        for dp_idx, dp in enumerate(decision_points):
            if dp.get("after_step") != idx:
                continue
            condition = dp.get("condition")
            if not usable(condition) and usable_rules:
                condition = usable_rules[0]
            compiled = usable(condition)
            if compiled:
                steps.append(
                    {
                        "step_id": f"d{dp_idx + 1}",
                        "kind": "branch",
                        "title": f"Decision: {dp.get('logic', condition)}",
                        "description": dp.get("logic", condition),
                        "required_keys": sorted(conditions.referenced_keys(condition)),
                        "output_keys": [],
                        "source": "internal",
                        "binding": {},
                        "branch": {
                            "condition": condition,
                            "then_steps": [],
                            "else_steps": [],
                        },
                    }
                )
            else:
                step["description"] = (
                    f"{step['description']} [decision: {dp.get('logic', '')}]"
                )

    result_keys: list[str] = []
    for step in steps:
        if step["source"] == "profile":
            continue
        for key in step["output_keys"]:
            if key not in result_keys:
                result_keys.append(key)

    return {
        "plan_id": f"plan-{payload_hash(payload)[:12]}",
        "task_id": "",
        "methodology_id": mdoc.get("methodology_id", ""),
        "result_keys": result_keys,
        "steps": steps,
    }


def rank_tools(payload: dict[str, Any]) -> dict[str, Any]:
    """Deterministic ranking: by score descending, then tool_id ascending."""
    ranked = sorted(
        payload["candidates"],
        key=lambda c: (-float(c.get("score", 0.0)), str(c["tool_id"])),
    )
    return {"ranked": [str(c["tool_id"]) for c in ranked]}


_HANDLERS = {
    "structure_task": structure_task,
    "generate_plan": derive_plan_document,
    "rank_tools": rank_tools,
}


class RulesBackend(Reasoner):
    """Computes every completion deterministically from the payload."""

    name = "rules"

    def complete(self, req: ReasonerRequest) -> ReasonerResponse:
        result = _HANDLERS[req.kind](req.payload)
        return ReasonerResponse(
            text=canonical_json(result), backend=self.name, deterministic=True
        )
