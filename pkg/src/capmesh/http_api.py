"""HTTP/JSON surface for every capability.

Each app wraps the same service object the in-process mode uses, so both
transports behave identically. Error bodies are always
``{"error_code": ..., "message": ...}``; timestamps on the wire are RFC 3339
UTC. The client classes at the bottom let a remote process compose against
these endpoints with the same call surface the in-process objects expose.
"""

from __future__ import annotations

import threading
from typing import Any

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .broker import ToolBroker
from .errors import (
    BadPosition,
    CapmeshError,
    ConditionParseError,
    DownstreamUnavailable,
    DuplicateToolOtherBroker,
    EmptyRequest,
    GatewayError,
    GatewayTimeout,
    NoToolFound,
    PlanParseError,
    ProbeUnhealthy,
    RegistryUnreachable,
    ScriptMiss,
    UnknownBroker,
    UnknownMethodology,
    UnknownTask,
    ValidationError,
    VersionConflict,
)
from .methodology import Methodology, MethodologyStore
from .planning import Plan, PlanningService, parse_plan_document
from .profile import ProfileStore
from .reception import ReceptionService
from .registry import DiscoveryResult, ToolDescriptor, ToolRegistry
from .tasks import StructuredTask, TaskResult, UserRequest
from .tool_services import InvokeRequest, ToolService
from .util import new_id, rfc3339

_STATUS_FOR = {
    EmptyRequest: 400,
    ValidationError: 400,
    BadPosition: 400,
    PlanParseError: 400,
    ConditionParseError: 400,
    UnknownTask: 404,
    UnknownMethodology: 404,
    UnknownBroker: 404,
    NoToolFound: 404,
    VersionConflict: 409,
    DuplicateToolOtherBroker: 409,
    ProbeUnhealthy: 409,
    DownstreamUnavailable: 503,
    RegistryUnreachable: 503,
    ScriptMiss: 502,
    GatewayTimeout: 502,
    GatewayError: 502,
}


def _install_error_handlers(app: FastAPI) -> None:
    @app.exception_handler(CapmeshError)
    async def _capmesh_error(_req: Request, exc: CapmeshError) -> JSONResponse:
        status = _STATUS_FOR.get(type(exc), 500)
        return JSONResponse(
            status_code=status,
            content={"error_code": exc.code, "message": exc.message},
        )

    @app.exception_handler(KeyError)
    async def _key_error(_req: Request, exc: KeyError) -> JSONResponse:
        return JSONResponse(
            status_code=404,
            content={"error_code": "not_found", "message": str(exc)},
        )

    @app.get("/health")
    async def _health() -> dict[str, str]:
        return {"status": "ok"}


def reception_app(service: ReceptionService) -> FastAPI:
    app = FastAPI(title="reception")
    _install_error_handlers(app)

    @app.post("/requests")
    async def submit(body: dict[str, Any]) -> dict[str, str]:
        req = UserRequest(
            request_id=body.get("request_id") or new_id("req"),
            user_id=body.get("user_id", ""),
            text=body.get("text", ""),
            submitted_at=body.get("submitted_at") or rfc3339(service._clock.now()),
        )
        return {"task_id": service.submit_request(req)}

    @app.get("/tasks/{task_id}")
    async def status(task_id: str) -> dict[str, Any]:
        result = service.get_status(task_id)
        if result is None:
            return {"status": "pending"}
        return result.to_document()

    @app.post("/results")
    async def receive(body: dict[str, Any]) -> dict[str, str]:
        service.receive_result(TaskResult.from_document(body))
        return {"status": "ok"}

    return app


def workflow_app(engine: Any) -> FastAPI:
    app = FastAPI(title="workflow")
    _install_error_handlers(app)

    @app.post("/instances")
    async def create(body: dict[str, Any]) -> dict[str, str]:
        task = StructuredTask.from_document(body["task"])
        instance_id = engine.create_instance(task)
        if body.get("run", True):
            threading.Thread(
                target=engine.run_instance, args=(instance_id,), daemon=True
            ).start()
        return {"instance_id": instance_id}

    @app.post("/instances/{instance_id}/run")
    async def run(instance_id: str) -> dict[str, str]:
        import anyio

        status = await anyio.to_thread.run_sync(engine.run_instance, instance_id)
        return {"status": status}

    @app.get("/instances/{instance_id}")
    async def get_instance(instance_id: str) -> dict[str, Any]:
        doc = engine.get_instance(instance_id)
        doc = dict(doc)
        doc["created_at"] = rfc3339(doc["created_at"]) if doc.get("created_at") else None
        doc["finished_at"] = rfc3339(doc["finished_at"]) if doc.get("finished_at") else None
        return doc

    return app


def planning_app(service: PlanningService, methodologies: MethodologyStore) -> FastAPI:
    app = FastAPI(title="planning")
    _install_error_handlers(app)

    @app.post("/plan")
    async def plan(body: dict[str, Any]) -> dict[str, Any]:
        task = StructuredTask.from_document(body["task"])
        methodology = methodologies.get(body["methodology_id"])
        return service.generate_plan(task, methodology).to_document()

    return app


def methodology_app(store: MethodologyStore) -> FastAPI:
    app = FastAPI(title="methodology")
    _install_error_handlers(app)

    @app.post("/methodologies")
    async def create(body: dict[str, Any]) -> dict[str, Any]:
        expert = body.pop("expert_id", "expert")
        mid, version = store.upsert_methodology(Methodology.from_document(body), expert)
        return {"methodology_id": mid, "version": version}

    @app.put("/methodologies/{methodology_id}")
    async def upsert(methodology_id: str, body: dict[str, Any]) -> dict[str, Any]:
        expert = body.pop("expert_id", "expert")
        body["methodology_id"] = methodology_id
        mid, version = store.upsert_methodology(Methodology.from_document(body), expert)
        return {"methodology_id": mid, "version": version}

    @app.get("/methodologies/{methodology_id}")
    async def get(methodology_id: str, version: int | None = None) -> dict[str, Any]:
        return store.get(methodology_id, version).to_document()

    @app.get("/methodologies")
    async def list_all() -> list[dict[str, Any]]:
        return [m.to_document() for m in store.list_latest()]

    @app.post("/methodologies/{methodology_id}/steps")
    async def insert_step(methodology_id: str, body: dict[str, Any]) -> dict[str, Any]:
        version = store.insert_step(
            methodology_id,
            int(body["position"]),
            body["step"],
            body.get("expert_id", "expert"),
        )
        return {"methodology_id": methodology_id, "version": version}

    @app.post("/methodologies/match")
    async def match(body: dict[str, Any]) -> dict[str, Any]:
        task = StructuredTask.from_document(body["task"])
        found = store.match_methodology(task)
        if found is None:
            return {"matched": None}
        return {"matched": found.to_document()}

    return app


def registry_app(registry: ToolRegistry) -> FastAPI:
    app = FastAPI(title="tool-registry")
    _install_error_handlers(app)

    @app.post("/tools")
    async def register(body: dict[str, Any]) -> dict[str, str]:
        desc = ToolDescriptor.from_document(body["descriptor"])
        tool_id = registry.register_tool(desc, body["broker_id"])
        return {"tool_id": tool_id}

    @app.get("/tools")
    async def list_tools() -> list[dict[str, Any]]:
        return [t.to_document() for t in registry.list_tools()]

    @app.get("/tools/{tool_id}")
    async def get_tool(tool_id: str) -> dict[str, Any]:
        tool = registry.get_tool(tool_id)
        if tool is None:
            raise KeyError(tool_id)
        return tool.to_document()

    @app.delete("/tools/{tool_id}")
    async def deregister(tool_id: str) -> dict[str, bool]:
        return {"deleted": registry.deregister_tool(tool_id)}

    @app.post("/heartbeats")
    async def heartbeat(body: dict[str, Any]) -> dict[str, list[str]]:
        return registry.heartbeat(
            body["broker_id"], list(body["tool_ids"]), body.get("ts")
        )

    @app.post("/discover")
    async def discover(body: dict[str, Any]) -> dict[str, Any]:
        result = registry.discover(
            body["step_description"],
            list(body.get("context_keys", [])),
            list(body.get("required_outputs", [])),
        )
        return result.to_document()

    @app.post("/sweep")
    async def sweep(body: dict[str, Any] | None = None) -> list[dict[str, str]]:
        now = (body or {}).get("now")
        return registry.sweep_stale(now)

    return app


def broker_app(broker: ToolBroker) -> FastAPI:
    app = FastAPI(title="tool-broker")
    _install_error_handlers(app)

    @app.post("/services")
    async def add(body: dict[str, Any]) -> dict[str, Any]:
        entry = broker.add_service(
            ToolDescriptor.from_document(body["descriptor"]), body["health_probe"]
        )
        return entry.to_document()

    @app.get("/services")
    async def list_services() -> list[dict[str, Any]]:
        return [m.to_document() for m in broker.list_services()]

    @app.post("/services/{tool_id}/register")
    async def register(tool_id: str) -> dict[str, str]:
        return {"tool_id": broker.register_managed(tool_id)}

    return app


def profile_app(store: ProfileStore) -> FastAPI:
    app = FastAPI(title="profile")
    _install_error_handlers(app)

    @app.get("/profiles/{namespace}/{key}")
    async def get(namespace: str, key: str) -> JSONResponse:
        value = store.get(namespace, key)
        if value is None:
            return JSONResponse(
                status_code=404,
                content={"error_code": "not_found", "message": f"{namespace}/{key}"},
            )
        return JSONResponse(content={"namespace": namespace, "key": key, "value": value})

    @app.put("/profiles/{namespace}/{key}")
    async def put(namespace: str, key: str, body: dict[str, Any]) -> dict[str, Any]:
        entry = store.put(namespace, key, body["value"])
        entry["updated_at"] = rfc3339(entry["updated_at"])
        return entry

    @app.delete("/profiles/{namespace}/{key}")
    async def delete(namespace: str, key: str) -> dict[str, bool]:
        return {"deleted": store.delete(namespace, key)}

    return app


def tool_service_app(service: ToolService) -> FastAPI:
    app = FastAPI(title=service.tool_id)
    _install_error_handlers(app)

    @app.post("/invoke")
    async def invoke(body: dict[str, Any]) -> JSONResponse:
        response = service.invoke(InvokeRequest.from_document(body))
        status = 200 if response.status == "ok" else 400
        return JSONResponse(status_code=status, content=response.to_document())

    @app.get("/schema")
    async def schema() -> dict[str, Any]:
        return service.schema()

    @app.get("/stats")
    async def stats() -> dict[str, int]:
        return {"invocations": service.invocations}

    return app


# --- HTTP clients (multi-process composition) ---------------------------------------

class _JsonClient:
    def __init__(self, base_url: str, client: Any | None = None, timeout_s: float = 10.0):
        import httpx

        self._client = client or httpx.Client(base_url=base_url, timeout=timeout_s)

    def _unwrap(self, response: Any) -> Any:
        if response.status_code >= 400:
            try:
                body = response.json()
            except ValueError:
                body = {}
            code = body.get("error_code", "http_error")
            message = body.get("message", f"HTTP {response.status_code}")
            if code == "no_tool_found":
                raise NoToolFound(message)
            if code == "version_conflict":
                raise VersionConflict(message)
            if code == "validation_error":
                raise ValidationError([message])
            raise CapmeshError(f"{code}: {message}")
        return response.json()


class RegistryHttpClient(_JsonClient):
    """Registry surface for a broker or engine in another process."""

    def register_tool(self, desc: ToolDescriptor, broker_id: str) -> str:
        doc = self._unwrap(
            self._client.post(
                "/tools", json={"descriptor": desc.to_document(), "broker_id": broker_id}
            )
        )
        return doc["tool_id"]

    def heartbeat(
        self, broker_id: str, tool_ids: list[str], timestamp: float | None = None
    ) -> dict[str, list[str]]:
        return self._unwrap(
            self._client.post(
                "/heartbeats",
                json={"broker_id": broker_id, "tool_ids": tool_ids, "ts": timestamp},
            )
        )

    def discover(
        self, step_description: str, context_keys: list[Any], required_outputs: list[str]
    ) -> DiscoveryResult:
        doc = self._unwrap(
            self._client.post(
                "/discover",
                json={
                    "step_description": step_description,
                    "context_keys": context_keys,
                    "required_outputs": required_outputs,
                },
            )
        )
        return DiscoveryResult(
            selected=doc["selected"],
            bound_params=doc["bound_params"],
            score=doc["score"],
            alternatives=[(t, s) for t, s in doc["alternatives"]],
        )

    def get_tool(self, tool_id: str) -> ToolDescriptor | None:
        response = self._client.get(f"/tools/{tool_id}")
        if response.status_code == 404:
            return None
        return ToolDescriptor.from_document(self._unwrap(response))

    def sweep_stale(self, now: float | None = None) -> list[dict[str, str]]:
        return self._unwrap(self._client.post("/sweep", json={"now": now}))


class WorkflowHttpClient(_JsonClient):
    """Engine surface for a reception service in another process."""

    def create_instance(self, task: StructuredTask) -> str:
        doc = self._unwrap(
            self._client.post("/instances", json={"task": task.to_document(), "run": False})
        )
        return doc["instance_id"]

    def run_instance(self, instance_id: str) -> str:
        doc = self._unwrap(self._client.post(f"/instances/{instance_id}/run"))
        return doc["status"]

    def get_instance(self, instance_id: str) -> dict[str, Any]:
        return self._unwrap(self._client.get(f"/instances/{instance_id}"))


class MethodologyHttpClient(_JsonClient):
    def get(self, methodology_id: str, version: int | None = None) -> Methodology:
        params = {"version": version} if version is not None else {}
        return Methodology.from_document(
            self._unwrap(self._client.get(f"/methodologies/{methodology_id}", params=params))
        )

    def match_methodology(self, task: StructuredTask) -> Methodology | None:
        doc = self._unwrap(
            self._client.post("/methodologies/match", json={"task": task.to_document()})
        )
        if doc["matched"] is None:
            return None
        return Methodology.from_document(doc["matched"])

    def insert_step(
        self, methodology_id: str, position: int, step: dict[str, Any], expert_id: str
    ) -> int:
        doc = self._unwrap(
            self._client.post(
                f"/methodologies/{methodology_id}/steps",
                json={"position": position, "step": step, "expert_id": expert_id},
            )
        )
        return doc["version"]


class ProfileHttpClient(_JsonClient):
    def get(self, namespace: str, key: str) -> Any | None:
        response = self._client.get(f"/profiles/{namespace}/{key}")
        if response.status_code == 404:
            return None
        return self._unwrap(response)["value"]

    def put(self, namespace: str, key: str, value: Any) -> dict[str, Any]:
        return self._unwrap(
            self._client.put(f"/profiles/{namespace}/{key}", json={"value": value})
        )


class PlanningHttpClient(_JsonClient):
    def generate_plan(self, task: StructuredTask, methodology: Methodology) -> Plan:
        doc = self._unwrap(
            self._client.post(
                "/plan",
                json={
                    "task": task.to_document(),
                    "methodology_id": methodology.methodology_id,
                },
            )
        )
        return parse_plan_document(doc)


class ReceptionResultSink:
    """Engine-side result delivery to a remote reception service."""

    def __init__(self, base_url: str, client: Any | None = None):
        self._inner = _JsonClient(base_url, client)

    def __call__(self, result: TaskResult) -> None:
        self._inner._unwrap(
            self._inner._client.post("/results", json=result.to_document())
        )


# --- serving ------------------------------------------------------------------------

APP_PORT_OFFSETS = {
    "reception": 0,
    "workflow": 1,
    "planning": 2,
    "methodology": 3,
    "tool-registry": 4,
    "tool-broker": 5,
    "profile": 6,
}
TOOL_PORT_OFFSET = 10


def build_apps(stack: Any) -> dict[str, FastAPI]:
    """One FastAPI app per capability plus one per seeded tool service."""
    apps = {
        "reception": reception_app(stack.reception),
        "workflow": workflow_app(stack.engine),
        "planning": planning_app(stack.planning, stack.methodologies),
        "methodology": methodology_app(stack.methodologies),
        "tool-registry": registry_app(stack.registry),
        "tool-broker": broker_app(stack.broker),
        "profile": profile_app(stack.profiles),
    }
    for tool_id in sorted(stack.services):
        apps[f"tool:{tool_id}"] = tool_service_app(stack.services[tool_id])
    return apps


def serve(stack: Any, host: str = "127.0.0.1", base_port: int = 8040) -> list[Any]:
    """Serve every app on its own port (threaded uvicorn servers). Returns
    the server handles; call .should_exit = True to stop them."""
    import uvicorn

    servers = []
    apps = build_apps(stack)
    tool_index = 0
    for name, app in apps.items():
        if name.startswith("tool:"):
            port = base_port + TOOL_PORT_OFFSET + tool_index
            tool_index += 1
        else:
            port = base_port + APP_PORT_OFFSETS[name]
        config = uvicorn.Config(app, host=host, port=port, log_level="warning")
        server = uvicorn.Server(config)
        thread = threading.Thread(target=server.run, name=f"serve-{name}", daemon=True)
        thread.start()
        servers.append(server)
    return servers
