"""Planning capability: turns a structured task plus a matched methodology
into a validated plan of executable steps (execute / branch / loop).

The reasoner produces a plan document in a strict JSON schema; documents are
never trusted without validation, and an invalid completion falls back to the
deterministic rule derivation so planning stays total for seeded intents.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterable

from . import conditions
from .binding import referenced_roots
from .errors import PlanningFailed, PlanParseError
from .methodology import Methodology
from .reasoner import Reasoner, ReasonerRequest
from .reasoner.rules import derive_plan_document
from .tasks import StructuredTask
from .util import canonical_json

STEP_KINDS = ("execute", "branch", "loop")
STEP_SOURCES = ("profile", "tool", "internal")

# Loop-scoped keys the engine injects for each iteration.
LOOP_SCOPE_KEYS = ("item", "index")


@dataclass
class BranchSpec:
    condition: str
    then_steps: list["ProcStep"]
    else_steps: list["ProcStep"]


@dataclass
class LoopSpec:
    exported_keys: list[str]
    body_steps: list["ProcStep"]
    over_key: str | None = None
    condition: str | None = None
    max_iterations: int | None = None


@dataclass
class ProcStep:
    step_id: str
    kind: str
    title: str
    description: str
    required_keys: list[str] = field(default_factory=list)
    output_keys: list[str] = field(default_factory=list)
    source: str = "tool"
    binding: dict[str, Any] = field(default_factory=dict)
    branch: BranchSpec | None = None
    loop: LoopSpec | None = None

    def to_document(self) -> dict[str, Any]:
        doc: dict[str, Any] = {
            "step_id": self.step_id,
            "kind": self.kind,
            "title": self.title,
            "description": self.description,
            "required_keys": list(self.required_keys),
            "output_keys": list(self.output_keys),
            "source": self.source,
            "binding": self.binding,
        }
        if self.branch is not None:
            doc["branch"] = {
                "condition": self.branch.condition,
                "then_steps": [s.to_document() for s in self.branch.then_steps],
                "else_steps": [s.to_document() for s in self.branch.else_steps],
            }
        if self.loop is not None:
            loop: dict[str, Any] = {
                "exported_keys": list(self.loop.exported_keys),
                "body_steps": [s.to_document() for s in self.loop.body_steps],
            }
            if self.loop.over_key is not None:
                loop["over_key"] = self.loop.over_key
            if self.loop.condition is not None:
                loop["condition"] = self.loop.condition
            if self.loop.max_iterations is not None:
                loop["max_iterations"] = self.loop.max_iterations
            doc["loop"] = loop
        return doc


@dataclass
class Plan:
    plan_id: str
    task_id: str
    methodology_id: str
    result_keys: list[str]
    steps: list[ProcStep]

    def to_document(self) -> dict[str, Any]:
        return {
            "plan_id": self.plan_id,
            "task_id": self.task_id,
            "methodology_id": self.methodology_id,
            "result_keys": list(self.result_keys),
            "steps": [s.to_document() for s in self.steps],
        }

    def canonical(self) -> str:
        return canonical_json(self.to_document())


# --- strict document parsing ---------------------------------------------------

def _require(doc: dict[str, Any], allowed: dict[str, type | tuple], path: str) -> None:
    unknown = set(doc) - set(allowed)
    if unknown:
        raise PlanParseError(f"unknown fields: {', '.join(sorted(unknown))}", path)
    for name, expect in allowed.items():
        if name not in doc:
            raise PlanParseError(f"missing field {name!r}", path)
        if not isinstance(doc[name], expect):
            raise PlanParseError(
                f"field {name!r} must be {getattr(expect, '__name__', expect)}",
                path,
            )


def _parse_str_list(value: Any, path: str) -> list[str]:
    if not isinstance(value, list) or not all(isinstance(x, str) for x in value):
        raise PlanParseError("must be a list of strings", path)
    return list(value)


def _parse_step(doc: Any, path: str) -> ProcStep:
    if not isinstance(doc, dict):
        raise PlanParseError("step must be an object", path)
    allowed: dict[str, Any] = {
        "step_id": str,
        "kind": str,
        "title": str,
        "description": str,
        "required_keys": list,
        "output_keys": list,
        "source": str,
        "binding": dict,
    }
    base = {k: v for k, v in doc.items() if k in ("branch", "loop")}
    rest = {k: v for k, v in doc.items() if k not in ("branch", "loop")}
    _require(rest, allowed, path)
    kind = doc["kind"]
    if kind not in STEP_KINDS:
        raise PlanParseError(f"unknown kind {kind!r}", f"{path}.kind")
    if doc["source"] not in STEP_SOURCES:
        raise PlanParseError(f"unknown source {doc['source']!r}", f"{path}.source")

    branch = None
    loop = None
    if kind == "branch":
        if "branch" not in base:
            raise PlanParseError("kind 'branch' requires a branch object", path)
        if "loop" in base:
            raise PlanParseError("branch step cannot carry a loop", path)
        branch = _parse_branch(base["branch"], f"{path}.branch")
    elif kind == "loop":
        if "loop" not in base:
            raise PlanParseError("kind 'loop' requires a loop object", path)
        if "branch" in base:
            raise PlanParseError("loop step cannot carry a branch", path)
        loop = _parse_loop(base["loop"], f"{path}.loop")
    elif base:
        raise PlanParseError("execute step cannot carry branch or loop", path)

    return ProcStep(
        step_id=doc["step_id"],
        kind=kind,
        title=doc["title"],
        description=doc["description"],
        required_keys=_parse_str_list(doc["required_keys"], f"{path}.required_keys"),
        output_keys=_parse_str_list(doc["output_keys"], f"{path}.output_keys"),
        source=doc["source"],
        binding=dict(doc["binding"]),
        branch=branch,
        loop=loop,
    )


def _parse_branch(doc: Any, path: str) -> BranchSpec:
    if not isinstance(doc, dict):
        raise PlanParseError("branch must be an object", path)
    _require(doc, {"condition": str, "then_steps": list, "else_steps": list}, path)
    return BranchSpec(
        condition=doc["condition"],
        then_steps=[
            _parse_step(s, f"{path}.then_steps[{i}]")
            for i, s in enumerate(doc["then_steps"])
        ],
        else_steps=[
            _parse_step(s, f"{path}.else_steps[{i}]")
            for i, s in enumerate(doc["else_steps"])
        ],
    )


def _parse_loop(doc: Any, path: str) -> LoopSpec:
    if not isinstance(doc, dict):
        raise PlanParseError("loop must be an object", path)
    allowed = {"over_key", "condition", "max_iterations", "exported_keys", "body_steps"}
    unknown = set(doc) - allowed
    if unknown:
        raise PlanParseError(f"unknown fields: {', '.join(sorted(unknown))}", path)
    for name in ("exported_keys", "body_steps"):
        if name not in doc:
            raise PlanParseError(f"missing field {name!r}", path)
    has_over = "over_key" in doc
    has_cond = "condition" in doc
    if has_over == has_cond:
        raise PlanParseError("loop needs exactly one of over_key or condition", path)
    if has_cond and not isinstance(doc.get("max_iterations"), int):
        raise PlanParseError("condition loops require integer max_iterations", path)
    if has_cond and doc["max_iterations"] < 1:
        raise PlanParseError("max_iterations must be >= 1", path)
    if has_over and not isinstance(doc["over_key"], str):
        raise PlanParseError("over_key must be a string", f"{path}.over_key")
    if has_cond and not isinstance(doc["condition"], str):
        raise PlanParseError("condition must be a string", f"{path}.condition")
    return LoopSpec(
        exported_keys=_parse_str_list(doc["exported_keys"], f"{path}.exported_keys"),
        body_steps=[
            _parse_step(s, f"{path}.body_steps[{i}]")
            for i, s in enumerate(doc["body_steps"])
        ],
        over_key=doc.get("over_key"),
        condition=doc.get("condition"),
        max_iterations=doc.get("max_iterations"),
    )


def parse_plan_document(doc: dict[str, Any]) -> Plan:
    """Strict parse of the plan-JSON schema; unknown fields are rejected."""
    if not isinstance(doc, dict):
        raise PlanParseError("plan must be an object", "$")
    _require(
        doc,
        {
            "plan_id": str,
            "task_id": str,
            "methodology_id": str,
            "result_keys": list,
            "steps": list,
        },
        "$",
    )
    return Plan(
        plan_id=doc["plan_id"],
        task_id=doc["task_id"],
        methodology_id=doc["methodology_id"],
        result_keys=_parse_str_list(doc["result_keys"], "$.result_keys"),
        steps=[_parse_step(s, f"$.steps[{i}]") for i, s in enumerate(doc["steps"])],
    )


def parse_reasoner_plan(raw: str) -> Plan:
    """Parse a reasoner completion into a Plan.

    Round-trip guarantee: ``parse(x).canonical()`` equals
    ``parse(parse(x).canonical()).canonical()``.
    """
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise PlanParseError(f"not valid JSON: {exc.msg}", f"$ (offset {exc.pos})")
    return parse_plan_document(doc)


# --- validation -----------------------------------------------------------------

def _written_keys(steps: Iterable[ProcStep]) -> set[str]:
    """Every key a step list can possibly write, including branch arms."""
    keys: set[str] = set()
    for step in steps:
        keys.update(step.output_keys)
        if step.branch is not None:
            keys |= _written_keys(step.branch.then_steps)
            keys |= _written_keys(step.branch.else_steps)
        if step.loop is not None:
            keys.update(step.loop.exported_keys)
    return keys


def _check_condition(expr: str, available: set[str], where: str, out: list[str]) -> None:
    try:
        refs = conditions.referenced_keys(expr)
    except Exception as exc:
        out.append(f"{where}: condition does not parse: {exc}")
        return
    for key in sorted(refs - available):
        out.append(f"{where}: condition references unbound key {key!r}")


def _validate_steps(
    steps: list[ProcStep], available: set[str], prefix: str, out: list[str]
) -> set[str]:
    if not steps and prefix == "$":
        out.append("empty plan")
    for step in steps:
        where = f"{prefix}.{step.step_id or '?'}"
        if not step.step_id:
            out.append(f"{where}: step_id must be non-empty")
        if step.kind not in STEP_KINDS:
            out.append(f"{where}: unknown kind {step.kind!r}")
            continue
        if (step.kind == "branch") != (step.branch is not None):
            out.append(f"{where}: kind/branch mismatch")
            continue
        if (step.kind == "loop") != (step.loop is not None):
            out.append(f"{where}: kind/loop mismatch")
            continue
        for key in step.required_keys:
            if key not in available:
                out.append(f"{where}: unbound key {key!r}")
        for key in sorted(referenced_roots(step.binding) - available):
            out.append(f"{where}: binding references unbound key {key!r}")

        if step.kind == "execute":
            available |= set(step.output_keys)
        elif step.kind == "branch":
            assert step.branch is not None
            _check_condition(step.branch.condition, available, where, out)
            then_avail = _validate_steps(
                step.branch.then_steps, set(available), where + ".then", out
            )
            else_avail = _validate_steps(
                step.branch.else_steps, set(available), where + ".else", out
            )
            for key in step.output_keys:
                if key not in then_avail or key not in else_avail:
                    out.append(
                        f"{where}: output {key!r} not guaranteed by both arms"
                    )
            available |= set(step.output_keys)
        else:
            assert step.loop is not None
            loop = step.loop
            body_avail = set(available)
            if loop.over_key is not None:
                if loop.over_key not in available:
                    out.append(f"{where}: loop over unbound key {loop.over_key!r}")
                body_avail |= set(LOOP_SCOPE_KEYS)
            else:
                body_avail.add("index")
                _check_condition(loop.condition or "", body_avail, where, out)
            _validate_steps(loop.body_steps, body_avail, where + ".body", out)
            writable = _written_keys(loop.body_steps)
            for key in loop.exported_keys:
                if key not in writable:
                    out.append(f"{where}: exported key {key!r} never written in body")
            missing = set(step.output_keys) - set(loop.exported_keys)
            for key in sorted(missing):
                out.append(f"{where}: output {key!r} not among exported keys")
            available |= set(loop.exported_keys)
    return available


def validate_plan(plan: Plan, initial_keys: Iterable[str] = ()) -> list[str]:
    """All invariant and dataflow violations; an empty list means valid.

    ``initial_keys`` are the context keys present before step one (the task's
    entities). Result keys must be produced by the steps themselves.
    """
    out: list[str] = []
    _validate_steps(plan.steps, set(initial_keys), "$", out)
    top_level_outputs: set[str] = set()
    for step in plan.steps:
        top_level_outputs |= set(step.output_keys)
    for key in plan.result_keys:
        if key not in top_level_outputs:
            out.append(f"$: result key {key!r} not produced by any step")
    seen: set[str] = set()
    for step in plan.steps:
        if step.step_id in seen:
            out.append(f"$: duplicate step_id {step.step_id!r}")
        seen.add(step.step_id)
    return out


# --- generation -------------------------------------------------------------------

def build_plan_payload(task: StructuredTask, methodology: Methodology) -> dict[str, Any]:
    return {"task": task.planning_view(), "methodology": methodology.planning_view()}


def generate_plan(
    task: StructuredTask, methodology: Methodology | None, reasoner: Reasoner
) -> Plan:
    """Obtain a plan from the reasoner, validate it, and fall back to the
    deterministic methodology derivation when the completion is unusable.
    The returned plan is stamped with the real task id."""
    if methodology is None:
        raise PlanningFailed("no methodology matched the task")
    payload = build_plan_payload(task, methodology)
    response = reasoner.complete(ReasonerRequest(kind="generate_plan", payload=payload))

    plan: Plan | None = None
    problems: list[str] = []
    try:
        candidate = parse_reasoner_plan(response.text)
        problems = validate_plan(candidate, initial_keys=task.entities.keys())
        if not problems:
            plan = candidate
    except PlanParseError as exc:
        problems = [str(exc)]

    if plan is None:
        fallback = parse_plan_document(derive_plan_document(payload))
        fallback_problems = validate_plan(fallback, initial_keys=task.entities.keys())
        if fallback_problems:
            raise PlanningFailed(
                "reasoner plan invalid ("
                + "; ".join(problems)
                + ") and fallback derivation invalid ("
                + "; ".join(fallback_problems)
                + ")"
            )
        plan = fallback

    plan.task_id = task.task_id
    return plan


class PlanningService:
    """Stateless request/response wrapper used by the workflow engine and the
    HTTP surface."""

    def __init__(self, reasoner: Reasoner):
        self._reasoner = reasoner

    def generate_plan(self, task: StructuredTask, methodology: Methodology) -> Plan:
        return generate_plan(task, methodology, self._reasoner)

    def validate(self, plan: Plan, initial_keys: Iterable[str] = ()) -> list[str]:
        return validate_plan(plan, initial_keys)
