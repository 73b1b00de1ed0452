"""Workflow capability: one instance per structured task.

The engine obtains a plan, executes its steps strictly in order (execute /
branch / loop), performs tool discovery and invocation per tool step, holds
the instance's context (short-term memory), and reports a task result when
the instance reaches a terminal state.

Every step transition is written ahead to an embedded store, so a restarted
engine resumes an interrupted instance without re-invoking steps that already
succeeded: replaying persisted outputs in order reconstructs the context
exactly.
"""

from __future__ import annotations

import json
import logging
import sqlite3
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Callable

from . import conditions
from .binding import BindingError, bind_template, bind_value
from .errors import (
    ConditionEvalError,
    LoopBoundExceeded,
    MissingInput,
    NoToolFound,
    PlanningFailed,
    StepTimeout,
    ToolInvocationError,
)
from .methodology import MethodologyStore
from .planning import Plan, PlanningService, ProcStep, parse_plan_document
from .profile import ProfileStore
from .registry import ToolRegistry, json_type_of
from .tasks import StructuredTask, TaskResult
from .tool_services import InvokeRequest, ToolInvoker
from .util import Clock, new_id

log = logging.getLogger(__name__)

INSTANCE_STATUSES = ("planning", "running", "completed", "failed", "needs_tool")
_STATUS_ORDER = {s: i for i, s in enumerate(INSTANCE_STATUSES)}

OUTCOMES = ("pending", "succeeded", "failed", "skipped", "no_tool")


@dataclass
class WorkflowConfig:
    step_timeout_s: float = 30.0
    invoke_retries: int = 1      # extra attempts after a failed invocation
    delivery_retries: int = 3


@dataclass
class StepState:
    step_index: int              # index of the owning top-level plan step
    step_ref: str                # unique path: "s2", "s4#0/s4.call", ...
    title: str
    kind: str
    attempt: int = 1
    outcome: str = "pending"
    tool_used: str | None = None
    inputs: dict[str, Any] = field(default_factory=dict)
    outputs: dict[str, Any] = field(default_factory=dict)
    error: str | None = None

    def to_document(self) -> dict[str, Any]:
        return {
            "step_index": self.step_index,
            "step_ref": self.step_ref,
            "title": self.title,
            "kind": self.kind,
            "attempt": self.attempt,
            "outcome": self.outcome,
            "tool_used": self.tool_used,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "error": self.error,
        }

    @classmethod
    def from_document(cls, doc: dict[str, Any]) -> "StepState":
        return cls(
            step_index=doc["step_index"],
            step_ref=doc["step_ref"],
            title=doc.get("title", ""),
            kind=doc.get("kind", "execute"),
            attempt=doc.get("attempt", 1),
            outcome=doc.get("outcome", "pending"),
            tool_used=doc.get("tool_used"),
            inputs=doc.get("inputs", {}),
            outputs=doc.get("outputs", {}),
            error=doc.get("error"),
        )


class _StepFailure(Exception):
    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


def _fail(exc: Any) -> _StepFailure:
    return _StepFailure(f"{exc.code}: {exc.message}")


class _HaltNeedsTool(Exception):
    def __init__(self, step: ProcStep):
        super().__init__(step.description)
        self.step = step


def _render_value(value: Any) -> str:
    if isinstance(value, list):
        parts = []
        for item in value:
            if isinstance(item, dict) and "name" in item:
                parts.append(str(item["name"]))
            else:
                parts.append(_render_value(item))
        return ", ".join(parts) if parts else "(none)"
    if isinstance(value, dict):
        return json.dumps(value, sort_keys=True)
    return str(value)


class WorkflowEngine:
    """Drives instances; all services are injected so the same engine runs
    single-process (in-memory transports) and multi-process (HTTP clients)."""

    def __init__(
        self,
        planning: PlanningService,
        methodologies: MethodologyStore,
        profiles: ProfileStore,
        registry: ToolRegistry,
        invoker: ToolInvoker,
        db_path: str = ":memory:",
        clock: Clock | None = None,
        config: WorkflowConfig | None = None,
        result_sink: Callable[[TaskResult], None] | None = None,
        observer: Callable[[dict[str, Any]], None] | None = None,
    ):
        self._planning = planning
        self._methodologies = methodologies
        self._profiles = profiles
        self._registry = registry
        self._invoker = invoker
        self._clock = clock or Clock()
        self.config = config or WorkflowConfig()
        self.result_sink = result_sink
        self.observer = observer
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()
        self._db = sqlite3.connect(db_path, check_same_thread=False)
        self._db_lock = threading.Lock()
        with self._db_lock:
            self._db.execute(
                "CREATE TABLE IF NOT EXISTS instances "
                "(instance_id TEXT PRIMARY KEY, doc TEXT NOT NULL)"
            )
            self._db.execute(
                "CREATE TABLE IF NOT EXISTS step_states ("
                " instance_id TEXT NOT NULL,"
                " ord INTEGER NOT NULL,"
                " step_ref TEXT NOT NULL,"
                " doc TEXT NOT NULL,"
                " PRIMARY KEY (instance_id, step_ref))"
            )
            self._db.commit()

    # -- persistence -------------------------------------------------------------

    def _save_instance(self, doc: dict[str, Any]) -> None:
        with self._db_lock:
            self._db.execute(
                "INSERT INTO instances (instance_id, doc) VALUES (?, ?) "
                "ON CONFLICT(instance_id) DO UPDATE SET doc=excluded.doc",
                (doc["instance_id"], json.dumps(doc)),
            )
            self._db.commit()

    def _load_instance(self, instance_id: str) -> dict[str, Any] | None:
        with self._db_lock:
            row = self._db.execute(
                "SELECT doc FROM instances WHERE instance_id = ?", (instance_id,)
            ).fetchone()
        return json.loads(row[0]) if row else None

    def _save_state(self, instance_id: str, state: StepState) -> None:
        with self._db_lock:
            row = self._db.execute(
                "SELECT MAX(ord) FROM step_states WHERE instance_id = ?",
                (instance_id,),
            ).fetchone()
            next_ord = (row[0] or 0) + 1
            self._db.execute(
                "INSERT INTO step_states (instance_id, ord, step_ref, doc) "
                "VALUES (?, ?, ?, ?) "
                "ON CONFLICT(instance_id, step_ref) DO UPDATE SET doc=excluded.doc",
                (instance_id, next_ord, state.step_ref, json.dumps(state.to_document())),
            )
            self._db.commit()

    def _load_states(self, instance_id: str) -> list[StepState]:
        with self._db_lock:
            rows = self._db.execute(
                "SELECT doc FROM step_states WHERE instance_id = ? ORDER BY ord",
                (instance_id,),
            ).fetchall()
        return [StepState.from_document(json.loads(r[0])) for r in rows]

    def _instance_lock(self, instance_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(instance_id, threading.Lock())

    def _emit(self, event: dict[str, Any]) -> None:
        if self.observer is not None:
            self.observer(event)

    # -- lifecycle -----------------------------------------------------------------

    def create_instance(self, task: StructuredTask, plan: Plan | None = None) -> str:
        """Create and plan an instance. A planning failure is recorded as a
        terminal failed instance (and reported), never silently dropped.

        ``plan`` bypasses the planner for callers that already hold a
        validated plan document."""
        instance_id = new_id("inst")
        now = self._clock.now()
        doc: dict[str, Any] = {
            "instance_id": instance_id,
            "task": task.to_document(),
            "plan": None,
            "status": "planning",
            "created_at": now,
            "finished_at": None,
            "error": None,
            "unmet": None,
            "final_context": None,
        }
        self._save_instance(doc)
        self._emit({"event": "instance_created", "instance_id": instance_id, "task_id": task.task_id})

        try:
            if plan is None:
                methodology = self._methodologies.match_methodology(task)
                plan = self._planning.generate_plan(task, methodology)  # type: ignore[arg-type]
        except PlanningFailed as exc:
            doc["status"] = "failed"
            doc["error"] = f"{exc.code}: {exc.message}"
            doc["finished_at"] = self._clock.now()
            self._save_instance(doc)
            self._emit(
                {"event": "planning_failed", "instance_id": instance_id, "error": str(exc)}
            )
            self._deliver(self._build_result(doc, {}))
            return instance_id

        doc["plan"] = plan.to_document()
        self._save_instance(doc)
        self._emit(
            {
                "event": "plan_generated",
                "instance_id": instance_id,
                "plan_id": plan.plan_id,
                "methodology_id": plan.methodology_id,
                "steps": len(plan.steps),
            }
        )
        return instance_id

    def run_instance(self, instance_id: str) -> str:
        """Execute (or resume) an instance to a terminal status."""
        with self._instance_lock(instance_id):
            doc = self._load_instance(instance_id)
            if doc is None:
                raise KeyError(instance_id)
            if doc["status"] in ("completed", "failed", "needs_tool"):
                return doc["status"]
            if doc["plan"] is None:
                return doc["status"]

            task = StructuredTask.from_document(doc["task"])
            plan = parse_plan_document(doc["plan"])
            self._set_status(doc, "running")

            context: dict[str, Any] = dict(task.entities)
            persisted = {s.step_ref: s for s in self._load_states(instance_id)}

            status = "completed"
            try:
                for index, step in enumerate(plan.steps):
                    self._run_unit(
                        doc, task, step, index, step.step_id, context, None, persisted
                    )
            except _HaltNeedsTool as halt:
                status = "needs_tool"
                doc["unmet"] = {
                    "step_id": halt.step.step_id,
                    "title": halt.step.title,
                    "description": halt.step.description,
                }
            except _StepFailure as failure:
                status = "failed"
                doc["error"] = failure.message

            doc["final_context"] = context
            doc["finished_at"] = self._clock.now()
            self._set_status(doc, status)
            result = self._build_result(doc, context, plan)
            self._deliver(result)
            return status

    def submit(self, task: StructuredTask) -> str:
        """Create and immediately run; reception calls this from its worker."""
        instance_id = self.create_instance(task)
        doc = self._load_instance(instance_id)
        if doc is not None and doc["status"] == "planning":
            self.run_instance(instance_id)
        return instance_id

    def get_instance(self, instance_id: str) -> dict[str, Any]:
        doc = self._load_instance(instance_id)
        if doc is None:
            raise KeyError(instance_id)
        doc["step_states"] = [s.to_document() for s in self._load_states(instance_id)]
        return doc

    def _set_status(self, doc: dict[str, Any], status: str) -> None:
        if _STATUS_ORDER[status] < _STATUS_ORDER[doc["status"]]:
            raise ValueError(
                f"backward status transition {doc['status']} -> {status}"
            )
        doc["status"] = status
        self._save_instance(doc)
        self._emit(
            {
                "event": "status_changed",
                "instance_id": doc["instance_id"],
                "status": status,
            }
        )

    # -- execution ----------------------------------------------------------------

    def _run_unit(
        self,
        doc: dict[str, Any],
        task: StructuredTask,
        step: ProcStep,
        top_index: int,
        path: str,
        context: dict[str, Any],
        sink: dict[str, Any] | None,
        persisted: dict[str, StepState],
    ) -> None:
        prior = persisted.get(path)
        if prior is not None and prior.outcome == "succeeded":
            self._merge(context, sink, prior.outputs)
            return

        state = StepState(
            step_index=top_index,
            step_ref=path,
            title=step.title,
            kind=step.kind,
            attempt=(prior.attempt + 1) if prior is not None else 1,
        )
        self._save_state(doc["instance_id"], state)

        try:
            if step.kind == "execute":
                self.execute_step(doc, task, step, state, context)
            elif step.kind == "branch":
                self.evaluate_branch(
                    doc, task, step, top_index, path, state, context, sink, persisted
                )
            else:
                self.run_loop(
                    doc, task, step, top_index, path, state, context, sink, persisted
                )
        except NoToolFound as exc:
            state.outcome = "no_tool"
            state.error = str(exc)
            self._save_state(doc["instance_id"], state)
            self._emit_step(doc, state)
            raise _HaltNeedsTool(step) from exc
        except _HaltNeedsTool:
            state.outcome = "no_tool"
            state.error = f"no tool found within {step.step_id}"
            self._save_state(doc["instance_id"], state)
            self._emit_step(doc, state)
            raise
        except _StepFailure as failure:
            state.outcome = "failed"
            state.error = failure.message
            self._save_state(doc["instance_id"], state)
            self._emit_step(doc, state)
            raise

        state.outcome = "succeeded"
        self._save_state(doc["instance_id"], state)
        self._merge(context, sink, state.outputs)
        self._emit_step(doc, state)

    def _emit_step(self, doc: dict[str, Any], state: StepState) -> None:
        self._emit(
            {
                "event": "step_finished",
                "instance_id": doc["instance_id"],
                "step_ref": state.step_ref,
                "title": state.title,
                "kind": state.kind,
                "outcome": state.outcome,
                "tool_used": state.tool_used,
            }
        )

    @staticmethod
    def _merge(
        context: dict[str, Any], sink: dict[str, Any] | None, outputs: dict[str, Any]
    ) -> None:
        context.update(outputs)
        if sink is not None:
            sink.update(outputs)

    # -- execute -------------------------------------------------------------------

    def execute_step(
        self,
        doc: dict[str, Any],
        task: StructuredTask,
        step: ProcStep,
        state: StepState,
        context: dict[str, Any],
    ) -> None:
        missing = [k for k in step.required_keys if k not in context]
        if missing:
            raise _fail(MissingInput(missing))

        if step.source == "profile":
            self._execute_profile(task, step, state, context)
        elif step.source == "internal":
            self._execute_internal(step, state, context)
        else:
            self._execute_tool(step, state, context)

    def _execute_profile(
        self,
        task: StructuredTask,
        step: ProcStep,
        state: StepState,
        context: dict[str, Any],
    ) -> None:
        if not step.output_keys:
            raise _StepFailure(f"profile step {step.step_id} declares no output key")
        try:
            bound = bind_template(step.binding, context)
        except BindingError as exc:
            raise _fail(MissingInput([exc.path])) from exc
        namespace = bound.get("namespace", f"user:{task.user_id}")
        key = bound.get("key", step.output_keys[0])
        state.inputs = {"namespace": namespace, "key": key}
        value = self._profiles.get(namespace, key)
        if value is None:
            raise _StepFailure(f"profile entry {namespace}/{key} not found")
        state.outputs = {step.output_keys[0]: value}

    def _execute_internal(
        self, step: ProcStep, state: StepState, context: dict[str, Any]
    ) -> None:
        try:
            bound = bind_template(step.binding, context)
        except BindingError as exc:
            raise _fail(MissingInput([exc.path])) from exc
        state.inputs = bound
        missing = [k for k in step.output_keys if k not in bound]
        if missing:
            raise _StepFailure(
                f"internal step {step.step_id} binding does not produce: "
                + ", ".join(missing)
            )
        state.outputs = {k: bound[k] for k in step.output_keys}

    def _execute_tool(
        self, step: ProcStep, state: StepState, context: dict[str, Any]
    ) -> None:
        typed_keys = [
            {"name": k, "type": json_type_of(context[k])} for k in sorted(context)
        ]
        discovery = self._registry.discover(step.description, typed_keys, step.output_keys)
        tool = self._registry.get_tool(discovery.selected)
        if tool is None:
            raise _StepFailure(f"selected tool {discovery.selected} vanished")
        state.tool_used = tool.tool_id

        try:
            inputs = bind_template(step.binding, context)
        except BindingError as exc:
            raise _fail(MissingInput([exc.path])) from exc
        for param in tool.params:
            name = param["name"]
            if name in inputs:
                continue
            bound_key = discovery.bound_params.get(name)
            if bound_key is not None and bound_key in context:
                inputs[name] = context[bound_key]
            elif param.get("required", False):
                raise _fail(MissingInput([f"parameter {name!r} of {tool.tool_id}"]))
        state.inputs = inputs

        result = self._invoke_with_retry(tool.endpoint, inputs, state)
        state.outputs = self._map_outputs(step, tool.tool_id, result)

    def _invoke_with_retry(
        self, endpoint: str, inputs: dict[str, Any], state: StepState
    ) -> dict[str, Any]:
        attempts = 1 + max(0, self.config.invoke_retries)
        started = time.monotonic()
        last_error = ""
        for attempt in range(attempts):
            state.attempt = max(state.attempt, attempt + 1)
            try:
                response = self._invoker.invoke(
                    endpoint, InvokeRequest(invocation_id=new_id("inv"), params=inputs)
                )
            except ToolInvocationError as exc:
                last_error = str(exc)
                if time.monotonic() - started > self.config.step_timeout_s:
                    raise _fail(StepTimeout(last_error)) from exc
                continue
            if time.monotonic() - started > self.config.step_timeout_s:
                raise _fail(
                    StepTimeout(f"step exceeded {self.config.step_timeout_s}s")
                )
            if response.status == "ok" and response.result is not None:
                return response.result
            last_error = response.error_message or "tool returned an error"
        raise _fail(ToolInvocationError(last_error))

    @staticmethod
    def _map_outputs(
        step: ProcStep, tool_id: str, result: dict[str, Any]
    ) -> dict[str, Any]:
        """Outputs merge under the step's declared keys: matching result field
        names map directly; a single declared key takes a single-field result
        wholesale (rename)."""
        outputs: dict[str, Any] = {}
        for key in step.output_keys:
            if key in result:
                outputs[key] = result[key]
            elif len(step.output_keys) == 1 and len(result) == 1:
                outputs[key] = next(iter(result.values()))
            else:
                raise _StepFailure(
                    f"tool {tool_id} result lacks declared output {key!r}"
                )
        return outputs

    # -- branch ---------------------------------------------------------------------

    def evaluate_branch(
        self,
        doc: dict[str, Any],
        task: StructuredTask,
        step: ProcStep,
        top_index: int,
        path: str,
        state: StepState,
        context: dict[str, Any],
        sink: dict[str, Any] | None,
        persisted: dict[str, StepState],
    ) -> str:
        assert step.branch is not None
        try:
            taken = conditions.evaluate(step.branch.condition, context)
        except ConditionEvalError as exc:
            raise _StepFailure(f"{exc.code}: {exc.message}") from exc
        chosen_label = "then" if taken else "else"
        chosen = step.branch.then_steps if taken else step.branch.else_steps
        skipped = step.branch.else_steps if taken else step.branch.then_steps

        for sub in skipped:
            sub_state = StepState(
                step_index=top_index,
                step_ref=f"{path}/{sub.step_id}",
                title=sub.title,
                kind=sub.kind,
                outcome="skipped",
            )
            self._save_state(doc["instance_id"], sub_state)

        for sub in chosen:
            self._run_unit(
                doc, task, sub, top_index, f"{path}/{sub.step_id}", context, sink, persisted
            )

        state.inputs = {"condition": step.branch.condition}
        state.outputs = {"chosen": chosen_label}
        # Declared branch outputs must now be present (arms produced them).
        for key in step.output_keys:
            if key not in context:
                raise _StepFailure(
                    f"branch {step.step_id} arm did not produce declared output {key!r}"
                )
            state.outputs[key] = context[key]
        return chosen_label

    # -- loop ------------------------------------------------------------------------

    def run_loop(
        self,
        doc: dict[str, Any],
        task: StructuredTask,
        step: ProcStep,
        top_index: int,
        path: str,
        state: StepState,
        context: dict[str, Any],
        sink: dict[str, Any] | None,
        persisted: dict[str, StepState],
    ) -> int:
        assert step.loop is not None
        loop = step.loop
        if loop.over_key is not None:
            return self._run_foreach(
                doc, task, step, top_index, path, state, context, persisted
            )
        return self._run_while(
            doc, task, step, top_index, path, state, context, persisted
        )

    def _run_foreach(
        self,
        doc: dict[str, Any],
        task: StructuredTask,
        step: ProcStep,
        top_index: int,
        path: str,
        state: StepState,
        context: dict[str, Any],
        persisted: dict[str, StepState],
    ) -> int:
        loop = step.loop
        assert loop is not None and loop.over_key is not None
        items = context.get(loop.over_key)
        if not isinstance(items, list):
            raise _StepFailure(
                f"loop {step.step_id} iterates over {loop.over_key!r}, which is not a list"
            )
        gathered: dict[str, list[Any]] = {k: [] for k in loop.exported_keys}
        for index, item in enumerate(items):
            overlay = dict(context)
            overlay["item"] = item
            overlay["index"] = index
            writes: dict[str, Any] = {}
            for sub in loop.body_steps:
                self._run_unit(
                    doc,
                    task,
                    sub,
                    top_index,
                    f"{path}#{index}/{sub.step_id}",
                    overlay,
                    writes,
                    persisted,
                )
            for key in loop.exported_keys:
                if key in writes:
                    gathered[key].append(writes[key])
        state.inputs = {"over_key": loop.over_key, "iterations": len(items)}
        state.outputs = {k: gathered[k] for k in loop.exported_keys}
        return len(items)

    def _run_while(
        self,
        doc: dict[str, Any],
        task: StructuredTask,
        step: ProcStep,
        top_index: int,
        path: str,
        state: StepState,
        context: dict[str, Any],
        persisted: dict[str, StepState],
    ) -> int:
        loop = step.loop
        assert loop is not None and loop.condition is not None
        max_iterations = loop.max_iterations or 1
        overlay = dict(context)
        writes: dict[str, Any] = {}
        iterations = 0
        while True:
            overlay["index"] = iterations
            try:
                keep_going = conditions.evaluate(loop.condition, overlay)
            except ConditionEvalError as exc:
                raise _StepFailure(f"{exc.code}: {exc.message}") from exc
            if not keep_going:
                break
            if iterations >= max_iterations:
                raise _fail(
                    LoopBoundExceeded(
                        f"loop {step.step_id} hit max_iterations={max_iterations}"
                    )
                )
            for sub in loop.body_steps:
                self._run_unit(
                    doc,
                    task,
                    sub,
                    top_index,
                    f"{path}#{iterations}/{sub.step_id}",
                    overlay,
                    writes,
                    persisted,
                )
            iterations += 1
        state.inputs = {"condition": loop.condition, "iterations": iterations}
        state.outputs = {
            k: overlay[k] for k in loop.exported_keys if k in writes
        }
        return iterations

    # -- reporting --------------------------------------------------------------------

    def _build_result(
        self,
        doc: dict[str, Any],
        context: dict[str, Any],
        plan: Plan | None = None,
    ) -> TaskResult:
        status = doc["status"]
        task_id = doc["task"]["task_id"]
        if status == "completed" and plan is not None:
            payload = {k: context[k] for k in plan.result_keys if k in context}
            summary = "; ".join(
                f"{key}: {_render_value(value)}" for key, value in payload.items()
            )
            return TaskResult(
                task_id=task_id,
                status="completed",
                summary=summary or "completed",
                payload=payload,
                trace_ref=doc["instance_id"],
            )
        if status == "needs_tool":
            unmet = doc.get("unmet") or {}
            return TaskResult(
                task_id=task_id,
                status="needs_tool",
                summary=(
                    "No suitable tool is registered for step: "
                    + unmet.get("description", unmet.get("title", "unknown step"))
                ),
                payload={"unmet_steps": [unmet]},
                trace_ref=doc["instance_id"],
            )
        return TaskResult(
            task_id=task_id,
            status="failed",
            summary=doc.get("error") or "workflow failed",
            payload={"error": doc.get("error")},
            trace_ref=doc["instance_id"],
        )

    def report_result(self, instance_id: str) -> TaskResult:
        """Result for a terminal instance, rebuilt from persisted state."""
        doc = self._load_instance(instance_id)
        if doc is None:
            raise KeyError(instance_id)
        if doc["status"] not in ("completed", "failed", "needs_tool"):
            raise ValueError(f"instance {instance_id} is not terminal")
        plan = parse_plan_document(doc["plan"]) if doc.get("plan") else None
        return self._build_result(doc, doc.get("final_context") or {}, plan)

    def _deliver(self, result: TaskResult) -> None:
        if self.result_sink is None:
            return
        self._emit(
            {
                "event": "result_reported",
                "task_id": result.task_id,
                "status": result.status,
            }
        )
        last: Exception | None = None
        for _ in range(self.config.delivery_retries):
            try:
                self.result_sink(result)
                return
            except Exception as exc:
                last = exc
        log.error("result delivery failed for %s: %s", result.task_id, last)
