"""Operator harness: boots the full capability set with demo fixtures and
replays the three demo scenarios end to end, emitting machine-checkable
transcripts.

Scenario 1: the travel query runs through profile lookup and two tool
invocations. Scenario 2: the expert inserts the weather-exclusion step, and
the re-submitted query halts with needs_tool because no weather tool exists.
Scenario 3: the provider registers the weather tool through the broker and the
same query completes with the adverse-weather city excluded. Scenario 3
builds on scenario 2's state; nothing is reset in between.
"""

from __future__ import annotations

import json
import re
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .broker import ToolBroker
from .config import BootConfig, DEMO_DIR, GOLDEN_DIR
from .errors import ScenarioFailed, SeedValidationError
from .methodology import Methodology, MethodologyStore
from .planning import PlanningService
from .profile import ProfileStore
from .reasoner import build_reasoner
from .reception import ReceptionService
from .registry import ToolDescriptor, ToolRegistry
from .tasks import TaskResult
from .tool_services import (
    AttractionsService,
    InProcessInvoker,
    NearbyCitiesService,
    ToolService,
    WeatherService,
)
from .util import Clock
from .workflow import WorkflowEngine

DEMO_USER = "u-demo"
DEMO_EXPERT = "expert-demo"
TRAVEL_QUERY = (
    "I want to go to a nearby city with my family this vacation, "
    "can you help me find some suitable cities?"
)

SERVICE_CLASSES: dict[str, type[ToolService]] = {
    "nearby_cities": NearbyCitiesService,
    "attractions": AttractionsService,
    "weather": WeatherService,
}


class TranscriptRecorder:
    """Collects observer events from every capability in one strictly ordered
    event list (a logical sequence counter, not wall time)."""

    _ACTORS = {
        "request_received": "reception",
        "task_structured": "reception",
        "result_received": "reception",
        "instance_created": "workflow",
        "status_changed": "workflow",
        "step_finished": "workflow",
        "result_reported": "workflow",
        "planning_failed": "planning",
        "plan_generated": "planning",
        "methodology_step_inserted": "methodology",
        "tool_registered": "broker",
    }

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._events: list[dict[str, Any]] = []
        self._seq = 0

    def __call__(self, event: dict[str, Any]) -> None:
        kind = event.get("event", "unknown")
        summary = self._summarize(kind, event)
        refs = {
            k: v
            for k, v in event.items()
            if k not in ("event",) and isinstance(v, (str, int))
        }
        with self._lock:
            self._seq += 1
            self._events.append(
                {
                    "seq": self._seq,
                    "actor": self._ACTORS.get(kind, "system"),
                    "action": kind,
                    "summary": summary,
                    "refs": refs,
                }
            )

    @staticmethod
    def _summarize(kind: str, event: dict[str, Any]) -> str:
        if kind == "request_received":
            return f"user asked: {event.get('text', '')}"
        if kind == "instance_created":
            return f"workflow instance {event.get('instance_id')} for {event.get('task_id')}"
        if kind == "result_reported":
            return f"reporting {event.get('status')} result for {event.get('task_id')}"
        if kind == "task_structured":
            entities = event.get("entities", {})
            rendered = ", ".join(f"{k}={entities[k]}" for k in sorted(entities))
            return f"intent {event.get('intent')} ({rendered})"
        if kind == "plan_generated":
            return f"plan with {event.get('steps')} steps from {event.get('methodology_id')}"
        if kind == "planning_failed":
            return str(event.get("error", "planning failed"))
        if kind == "step_finished":
            tool = event.get("tool_used")
            suffix = f" via {tool}" if tool else ""
            return f"{event.get('title')} -> {event.get('outcome')}{suffix}"
        if kind == "status_changed":
            return f"instance is {event.get('status')}"
        if kind == "result_received":
            return f"{event.get('status')}: {event.get('summary')}"
        if kind == "methodology_step_inserted":
            return f"inserted step {event.get('title')!r} at {event.get('position')}"
        if kind == "tool_registered":
            return f"registered {event.get('tool_id')}"
        return kind

    def drain(self) -> list[dict[str, Any]]:
        """Take all events and restart the sequence counter, so transcripts
        number from 1 no matter what ran before."""
        with self._lock:
            events, self._events = self._events, []
            self._seq = 0
            return events


@dataclass
class Stack:
    """All capabilities wired together in one process over in-memory
    transports; the HTTP apps in http_api serve the same objects."""

    config: BootConfig
    clock: Clock
    recorder: TranscriptRecorder
    profiles: ProfileStore
    methodologies: MethodologyStore
    registry: ToolRegistry
    invoker: InProcessInvoker
    broker: ToolBroker
    planning: PlanningService
    engine: WorkflowEngine
    reception: ReceptionService
    services: dict[str, ToolService] = field(default_factory=dict)
    fixture_dir: Path = DEMO_DIR

    def health(self) -> dict[str, str]:
        components = (
            "reception",
            "workflow",
            "planning",
            "methodology",
            "profile",
            "tool-registry",
            "tool-broker",
        )
        return {name: "ok" for name in components}

    def add_tool_service(self, kind: str, fixture_path: Path) -> ToolService:
        """Stand up (deploy) a demo service in-process; idempotent per tool."""
        existing = self.services.get(SERVICE_CLASSES[kind].tool_id)
        if existing is not None:
            return existing
        service = SERVICE_CLASSES[kind](fixture_path)
        endpoint = f"inproc://{service.tool_id}"
        self.invoker.add(endpoint, service)
        self.services[service.tool_id] = service
        return service

    def descriptor_for(self, service: ToolService) -> ToolDescriptor:
        return ToolDescriptor(
            tool_id=service.tool_id,
            name=service.display_name,
            description=service.description,
            tags=list(service.tags),
            endpoint=f"inproc://{service.tool_id}",
            params=[dict(p) for p in service.params],
            output_schema=[dict(p) for p in service.output_schema],
        )

    def shutdown(self) -> None:
        self.broker.stop_background()
        self.reception.shutdown()


def _inproc_probe(invoker: InProcessInvoker):
    def probe(url: str) -> bool:
        service = invoker.services.get(url.removesuffix("/health"))
        return service is not None and service.health().get("status") == "ok"

    return probe


def boot(config: BootConfig) -> Stack:
    """Wire every capability in one process. All seven components must be
    healthy before seeding."""
    clock = Clock()
    recorder = TranscriptRecorder()
    reasoner = build_reasoner(config.reasoner)
    profiles = ProfileStore(config.store_path("profiles"), clock=clock)
    methodologies = MethodologyStore(
        config.store_path("methodologies"),
        clock=clock,
        match_threshold=config.match_threshold,
    )
    registry = ToolRegistry(config.registry, clock=clock, reasoner=reasoner)
    invoker = InProcessInvoker()
    broker = ToolBroker(
        config.broker.broker_id,
        registry,
        db_path=config.store_path("broker"),
        clock=clock,
        probe=_inproc_probe(invoker),
        heartbeat_interval_s=config.broker.heartbeat_interval_s,
        jitter_fraction=config.broker.jitter_fraction,
        sleep=lambda _s: None,
    )
    planning = PlanningService(reasoner)
    engine = WorkflowEngine(
        planning,
        methodologies,
        profiles,
        registry,
        invoker,
        db_path=config.store_path("workflow"),
        clock=clock,
        config=config.workflow,
        observer=recorder,
    )
    reception = ReceptionService(
        reasoner,
        methodologies,
        engine,
        entity_rules=config.entity_rules,
        clock=clock,
        observer=recorder,
    )
    engine.result_sink = reception.receive_result

    stack = Stack(
        config=config,
        clock=clock,
        recorder=recorder,
        profiles=profiles,
        methodologies=methodologies,
        registry=registry,
        invoker=invoker,
        broker=broker,
        planning=planning,
        engine=engine,
        reception=reception,
    )
    unhealthy = [name for name, state in stack.health().items() if state != "ok"]
    if unhealthy:
        raise SeedValidationError(f"components unhealthy after boot: {unhealthy}")
    return stack


def seed(stack: Stack, fixture_dir: str | Path = DEMO_DIR) -> dict[str, int]:
    """Load methodologies, profile entries, and managed tool services from a
    fixture directory; registration of the seeded tools is initiated here,
    standing in for the tool providers."""
    root = Path(fixture_dir)
    manifest_path = root / "seed.json"
    if not manifest_path.exists():
        raise SeedValidationError(f"no seed.json under {root}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    stack.fixture_dir = root

    counts = {"methodologies": 0, "profiles": 0, "tools": 0}
    for rel in manifest.get("methodologies", []):
        doc = json.loads((root / rel).read_text(encoding="utf-8"))
        stack.methodologies.upsert_methodology(Methodology.from_document(doc), DEMO_EXPERT)
        counts["methodologies"] += 1
    profiles_rel = manifest.get("profiles")
    if profiles_rel:
        for entry in json.loads((root / profiles_rel).read_text(encoding="utf-8")):
            stack.profiles.put(entry["namespace"], entry["key"], entry["value"])
            counts["profiles"] += 1
    for rel in manifest.get("managed_tools", []):
        register_tool_fixture(stack, root / rel)
        counts["tools"] += 1
    # Deployed-but-unregistered services: stood up so a provider can later
    # walk them through the broker's registration flow (scenario 3).
    for rel in manifest.get("deployed_tools", []):
        spec_path = root / rel
        if not spec_path.exists():
            raise SeedValidationError(f"missing tool fixture {spec_path}")
        spec = json.loads(spec_path.read_text(encoding="utf-8"))
        data_path = spec_path.parent / spec["fixture"]
        if not data_path.exists():
            raise SeedValidationError(f"missing tool data file {data_path}")
        stack.add_tool_service(spec["service"], data_path)
    return counts


def register_tool_fixture(stack: Stack, fixture_file: Path) -> str:
    """Stand up one demo tool service and walk it through the broker's
    add + register flow (the provider's manual action)."""
    if not fixture_file.exists():
        raise SeedValidationError(f"missing tool fixture {fixture_file}")
    spec = json.loads(fixture_file.read_text(encoding="utf-8"))
    data_path = fixture_file.parent / spec["fixture"]
    if not data_path.exists():
        raise SeedValidationError(f"missing tool data file {data_path}")
    service = stack.add_tool_service(spec["service"], data_path)
    descriptor = stack.descriptor_for(service)
    already = {m.descriptor.tool_id for m in stack.broker.list_services()}
    if descriptor.tool_id not in already:
        stack.broker.add_service(descriptor, f"inproc://{service.tool_id}/health")
    stack.broker.register_managed(descriptor.tool_id)
    stack.recorder(
        {"event": "tool_registered", "tool_id": descriptor.tool_id, "via": "broker"}
    )
    return descriptor.tool_id


# --- scenarios -----------------------------------------------------------------------

def _ensure_weather_step(stack: Stack) -> None:
    doc = stack.methodologies.get("travel-city-recommendation")
    if any(s.get("for_each") for s in doc.process_steps):
        return
    step = json.loads(
        (stack.fixture_dir / "steps" / "weather_exclusion.json").read_text(
            encoding="utf-8"
        )
    )
    position = len(doc.process_steps)
    version = stack.methodologies.insert_step(
        doc.methodology_id, position, step, DEMO_EXPERT
    )
    stack.recorder(
        {
            "event": "methodology_step_inserted",
            "methodology_id": doc.methodology_id,
            "title": step["title"],
            "position": position,
            "version": version,
        }
    )


def _ensure_weather_tool(stack: Stack) -> None:
    if "weather-query" in {m.descriptor.tool_id for m in stack.broker.list_services()}:
        if stack.registry.get_tool("weather-query") is not None:
            return
    register_tool_fixture(stack, stack.fixture_dir / "tools" / "weather.json")


def _submit_and_wait(stack: Stack, timeout_s: float = 10.0) -> TaskResult:
    req = stack.reception.make_request(DEMO_USER, TRAVEL_QUERY)
    task_id = stack.reception.submit_request(req)
    return stack.reception.wait_for(task_id, timeout_s=timeout_s)


def run_scenario(stack: Stack, n: int, timeout_s: float = 10.0) -> dict[str, Any]:
    """Replay one demo scenario; returns the raw (un-normalized) transcript.

    Scenario 3 builds on scenario 2's state: when run standalone, the
    methodology edit is applied silently as a precondition before the
    transcript window opens (in-suite it is already present)."""
    if n not in (1, 2, 3):
        raise ValueError("scenario must be 1, 2, or 3")
    if n == 3:
        _ensure_weather_step(stack)
    stack.recorder.drain()
    if n == 2:
        _ensure_weather_step(stack)
    if n == 3:
        _ensure_weather_tool(stack)
    result = _submit_and_wait(stack, timeout_s=timeout_s)
    return {
        "scenario": n,
        "events": stack.recorder.drain(),
        "final": result.to_document(),
    }


# --- transcript normalization -----------------------------------------------------------

_ID_RE = re.compile(r"\b(task|req|inst|plan|inv)-[0-9a-f]{12}\b")
_TS_RE = re.compile(r"\b\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}(?:\.\d+)?(?:Z|[+-]\d{2}:\d{2})\b")


def normalize_transcript(transcript: dict[str, Any]) -> dict[str, Any]:
    """Replace volatile identifiers and timestamps with stable placeholders:
    ids become ``<kind-N>`` in first-seen order, timestamps become ``<ts>``."""
    mapping: dict[str, str] = {}
    counters: dict[str, int] = {}

    def replace_ids(text: str) -> str:
        def sub(m: re.Match[str]) -> str:
            original = m.group(0)
            if original not in mapping:
                kind = m.group(1)
                counters[kind] = counters.get(kind, 0) + 1
                mapping[original] = f"<{kind}-{counters[kind]}>"
            return mapping[original]

        return _TS_RE.sub("<ts>", _ID_RE.sub(sub, text))

    def walk(node: Any) -> Any:
        if isinstance(node, str):
            return replace_ids(node)
        if isinstance(node, dict):
            return {k: walk(v) for k, v in node.items()}
        if isinstance(node, list):
            return [walk(v) for v in node]
        return node

    return walk(transcript)


def golden_path(n: int) -> Path:
    return GOLDEN_DIR / f"scenario{n}.json"


def compare_to_golden(
    transcript: dict[str, Any], golden_file: str | Path
) -> str | None:
    """None when the normalized transcript matches; otherwise the first
    divergence, described."""
    golden = json.loads(Path(golden_file).read_text(encoding="utf-8"))
    actual = normalize_transcript(transcript)
    return _first_divergence(golden, actual, "$")


def _first_divergence(expected: Any, actual: Any, path: str) -> str | None:
    if type(expected) is not type(actual):
        return f"{path}: expected {type(expected).__name__}, got {type(actual).__name__}"
    if isinstance(expected, dict):
        for key in expected:
            if key not in actual:
                return f"{path}: missing key {key!r}"
            diff = _first_divergence(expected[key], actual[key], f"{path}.{key}")
            if diff:
                return diff
        extra = set(actual) - set(expected)
        if extra:
            return f"{path}: unexpected keys {sorted(extra)}"
        return None
    if isinstance(expected, list):
        if len(expected) != len(actual):
            return f"{path}: expected {len(expected)} items, got {len(actual)}"
        for i, (e, a) in enumerate(zip(expected, actual)):
            diff = _first_divergence(e, a, f"{path}[{i}]")
            if diff:
                return diff
        return None
    if expected != actual:
        return f"{path}: expected {expected!r}, got {actual!r}"
    return None


def run_scenario_checked(
    stack: Stack, n: int, golden_file: str | Path | None = None
) -> dict[str, Any]:
    """Run a scenario and verify it against its golden transcript; raises
    ScenarioFailed at the first divergence."""
    transcript = run_scenario(stack, n)
    golden = Path(golden_file) if golden_file else golden_path(n)
    divergence = compare_to_golden(transcript, golden)
    if divergence:
        raise ScenarioFailed(f"scenario {n} diverges from golden: {divergence}")
    return transcript
