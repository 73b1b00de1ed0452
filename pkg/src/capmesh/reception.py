"""Reception capability: the front door.

Accepts user requests, converts them into structured tasks (via the reasoner,
which under the rule-based backend is a keyword-lexicon intent match plus
configured entity patterns), hands tasks to the workflow engine, and serves
results back to callers. Submission is asynchronous: callers poll by task id.
"""

from __future__ import annotations

import json
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable

from .errors import DownstreamUnavailable, EmptyRequest, UnknownTask
from .methodology import MethodologyStore
from .reasoner import Reasoner, ReasonerRequest
from .tasks import StructuredTask, TaskResult, UserRequest
from .util import Clock, new_id, rfc3339

log = logging.getLogger(__name__)


class ReceptionService:
    def __init__(
        self,
        reasoner: Reasoner,
        methodologies: MethodologyStore,
        engine: Any,  # WorkflowEngine or an HTTP client with the same surface
        entity_rules: list[dict[str, Any]] | None = None,
        clock: Clock | None = None,
        observer: Callable[[dict[str, Any]], None] | None = None,
        max_workers: int = 8,
    ):
        self._reasoner = reasoner
        self._methodologies = methodologies
        self._engine = engine
        self._entity_rules = entity_rules or []
        self._clock = clock or Clock()
        self.observer = observer
        self._lock = threading.RLock()
        self._results: dict[str, TaskResult | None] = {}
        self._instances: dict[str, str] = {}
        self._pool = ThreadPoolExecutor(max_workers=max_workers, thread_name_prefix="reception")

    def _emit(self, event: dict[str, Any]) -> None:
        if self.observer is not None:
            self.observer(event)

    # -- operations ---------------------------------------------------------------

    def structure_request(self, req: UserRequest) -> StructuredTask:
        """Deterministic for a fixed backend: same text, same intent and
        entities. Unusable completions fall back to intent "unknown"."""
        lexicon = self._methodologies.intent_lexicon()
        payload = {
            "text": req.text,
            "intent_lexicon": lexicon,
            "entity_rules": self._entity_rules,
        }
        intent = "unknown"
        entities: dict[str, str] = {}
        constraints: list[str] = []
        try:
            response = self._reasoner.complete(
                ReasonerRequest(kind="structure_task", payload=payload)
            )
            parsed = json.loads(response.text)
            candidate = parsed.get("intent", "unknown")
            if candidate in lexicon or candidate == "unknown":
                intent = candidate
            entities = {str(k): str(v) for k, v in parsed.get("entities", {}).items()}
            constraints = [str(c) for c in parsed.get("constraints", [])]
        except Exception as exc:
            log.warning("structuring fell back to intent 'unknown': %s", exc)
        return StructuredTask(
            task_id=new_id("task"),
            request_id=req.request_id,
            user_id=req.user_id,
            intent=intent,
            entities=entities,
            constraints=constraints,
            raw_text=req.text,
        )

    def submit_request(self, req: UserRequest) -> str:
        """Validates, structures, creates the workflow instance, and returns
        the task id immediately; the instance runs on a worker thread."""
        if not req.text or not req.text.strip():
            raise EmptyRequest("request text is blank")
        self._emit({"event": "request_received", "request_id": req.request_id, "text": req.text})
        task = self.structure_request(req)
        self._emit(
            {
                "event": "task_structured",
                "task_id": task.task_id,
                "intent": task.intent,
                "entities": task.entities,
            }
        )
        with self._lock:
            self._results[task.task_id] = None
        try:
            instance_id = self._engine.create_instance(task)
        except Exception as exc:
            with self._lock:
                del self._results[task.task_id]
            raise DownstreamUnavailable(f"workflow engine rejected the task: {exc}") from exc
        with self._lock:
            self._instances[task.task_id] = instance_id
        self._pool.submit(self._drive, task.task_id, instance_id)
        return task.task_id

    def _drive(self, task_id: str, instance_id: str) -> None:
        try:
            self._engine.run_instance(instance_id)
        except Exception as exc:
            log.exception("instance %s crashed", instance_id)
            self.receive_result(
                TaskResult(
                    task_id=task_id,
                    status="failed",
                    summary=f"workflow engine error: {exc}",
                    payload={"error": str(exc)},
                    trace_ref=instance_id,
                )
            )

    def receive_result(self, result: TaskResult) -> None:
        """Called by the workflow engine exactly once per terminal instance;
        repeated deliveries of the same result are harmless."""
        with self._lock:
            existing = self._results.get(result.task_id)
            if existing is None:
                self._results[result.task_id] = result
        self._emit(
            {
                "event": "result_received",
                "task_id": result.task_id,
                "status": result.status,
                "summary": result.summary,
            }
        )

    def get_status(self, task_id: str) -> TaskResult | None:
        """The final TaskResult, or None while the task is still running."""
        with self._lock:
            if task_id not in self._results:
                raise UnknownTask(task_id)
            return self._results[task_id]

    def instance_for(self, task_id: str) -> str | None:
        with self._lock:
            return self._instances.get(task_id)

    def wait_for(self, task_id: str, timeout_s: float = 10.0, poll_s: float = 0.02) -> TaskResult:
        """Poll until the task reaches a terminal result (test/CLI helper)."""
        import time

        deadline = time.monotonic() + timeout_s
        while time.monotonic() < deadline:
            result = self.get_status(task_id)
            if result is not None:
                return result
            time.sleep(poll_s)
        raise TimeoutError(f"task {task_id} not terminal within {timeout_s}s")

    def make_request(self, user_id: str, text: str) -> UserRequest:
        return UserRequest(
            request_id=new_id("req"),
            user_id=user_id,
            text=text,
            submitted_at=rfc3339(self._clock.now()),
        )

    def shutdown(self) -> None:
        self._pool.shutdown(wait=False)
