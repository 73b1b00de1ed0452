"""Demo tool services: three deterministic fixture-backed services behind the
common invoke contract (``POST {endpoint}/invoke`` plus ``GET /health`` and
``GET /schema``).

Fixtures are human-readable JSONL files shipped in the repo, one record per
line, shaped like the response payloads, so every expected value in the tests
can be read straight from the fixture.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Protocol

from .errors import ToolInvocationError
from .util import new_id

_PY_TYPES = {
    "string": (str,),
    "number": (int, float),
    "boolean": (bool,),
    "list": (list,),
    "object": (dict,),
}


@dataclass(frozen=True)
class InvokeRequest:
    invocation_id: str
    params: dict[str, Any]

    @classmethod
    def from_document(cls, doc: dict[str, Any]) -> "InvokeRequest":
        return cls(
            invocation_id=doc.get("invocation_id") or new_id("inv"),
            params=dict(doc.get("params", {})),
        )


@dataclass(frozen=True)
class InvokeResponse:
    invocation_id: str
    status: str  # "ok" | "error"
    result: dict[str, Any] | None = None
    error_message: str | None = None
    error_code: str | None = None

    def to_document(self) -> dict[str, Any]:
        doc: dict[str, Any] = {
            "invocation_id": self.invocation_id,
            "status": self.status,
        }
        if self.result is not None:
            doc["result"] = self.result
        if self.error_message is not None:
            doc["error_message"] = self.error_message
        if self.error_code is not None:
            doc["error_code"] = self.error_code
        return doc


class ServiceError(Exception):
    """Domain rejection from a tool service (maps to a 4xx-class reply)."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code
        self.message = message


def check_params(schema: list[dict[str, Any]], given: dict[str, Any]) -> None:
    """Strict: unknown parameters and type mismatches are rejected, never
    coerced; missing required parameters are rejected."""
    by_name = {p["name"]: p for p in schema}
    for name in given:
        if name not in by_name:
            raise ServiceError("unknown_param", f"unknown parameter {name!r}")
    for name, spec in by_name.items():
        if name not in given:
            if spec.get("required", False):
                raise ServiceError("missing_param", f"missing required parameter {name!r}")
            continue
        expected = _PY_TYPES[spec.get("type", "string")]
        value = given[name]
        if isinstance(value, bool) and spec.get("type") != "boolean":
            raise ServiceError(
                "type_mismatch", f"parameter {name!r} must be {spec.get('type')}"
            )
        if not isinstance(value, expected):
            raise ServiceError(
                "type_mismatch", f"parameter {name!r} must be {spec.get('type')}"
            )


class ToolService:
    """Base for the demo services; subclasses define schemas and handle()."""

    tool_id = ""
    display_name = ""
    description = ""
    tags: list[str] = []
    params: list[dict[str, Any]] = []
    output_schema: list[dict[str, Any]] = []

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.invocations = 0

    def handle(self, params: dict[str, Any]) -> dict[str, Any]:  # pragma: no cover
        raise NotImplementedError

    def invoke(self, req: InvokeRequest) -> InvokeResponse:
        with self._lock:
            self.invocations += 1
        try:
            check_params(self.params, req.params)
            result = self.handle(req.params)
        except ServiceError as exc:
            return InvokeResponse(
                invocation_id=req.invocation_id,
                status="error",
                error_message=exc.message,
                error_code=exc.code,
            )
        return InvokeResponse(
            invocation_id=req.invocation_id, status="ok", result=result
        )

    def health(self) -> dict[str, str]:
        return {"status": "ok", "tool_id": self.tool_id}

    def schema(self) -> dict[str, Any]:
        return {
            "tool_id": self.tool_id,
            "params": [dict(p) for p in self.params],
            "output_schema": [dict(p) for p in self.output_schema],
        }


def _read_jsonl(path: str | Path) -> list[dict[str, Any]]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


class NearbyCitiesService(ToolService):
    tool_id = "nearby-city-finder"
    display_name = "Nearby City Finder"
    description = (
        "Find candidate cities near a given home address within a maximum "
        "distance, for short trips from a starting location"
    )
    tags = ["cities", "nearby", "geo", "address"]
    params = [
        {
            "name": "address",
            "type": "string",
            "required": True,
            "description": "address identifier of the search origin",
        },
        {
            "name": "max_distance_km",
            "type": "number",
            "required": True,
            "description": "maximum search radius in kilometers",
        },
    ]
    output_schema = [
        {
            "name": "cities",
            "type": "list",
            "required": True,
            "description": "cities within range, nearest first",
        }
    ]

    def __init__(self, fixture_path: str | Path):
        super().__init__()
        self._by_address = {r["address"]: r["cities"] for r in _read_jsonl(fixture_path)}

    def handle(self, params: dict[str, Any]) -> dict[str, Any]:
        address = params["address"]
        if address not in self._by_address:
            raise ServiceError("unknown_address", f"address {address!r} not in fixture")
        limit = params["max_distance_km"]
        cities = [
            dict(c) for c in self._by_address[address] if c["distance_km"] <= limit
        ]
        cities.sort(key=lambda c: (c["distance_km"], c["name"]))
        return {"cities": cities}


class AttractionsService(ToolService):
    tool_id = "attraction-lookup"
    display_name = "Attraction Lookup"
    description = "Look up family friendly attractions and sights in a city"
    tags = ["attractions", "city", "sights", "family"]
    params = [
        {
            "name": "city",
            "type": "string",
            "required": True,
            "description": "name of the city to inspect",
        }
    ]
    output_schema = [
        {
            "name": "attractions",
            "type": "list",
            "required": True,
            "description": "attraction records with family_friendly flags",
        }
    ]

    def __init__(self, fixture_path: str | Path):
        super().__init__()
        self._by_city = {r["city"]: r["attractions"] for r in _read_jsonl(fixture_path)}

    def handle(self, params: dict[str, Any]) -> dict[str, Any]:
        city = params["city"]
        if city not in self._by_city:
            raise ServiceError("unknown_city", f"city {city!r} not in fixture")
        return {"attractions": [dict(a) for a in self._by_city[city]]}


class WeatherService(ToolService):
    tool_id = "weather-query"
    display_name = "Weather Query Service"
    description = (
        "Query the weather forecast for a city over a date range, counting "
        "days with adverse conditions during the period"
    )
    tags = ["weather", "forecast", "adverse", "climate"]
    params = [
        {
            "name": "city",
            "type": "string",
            "required": True,
            "description": "name of the city to query",
        },
        {
            "name": "date_from",
            "type": "string",
            "required": True,
            "description": "first day (YYYY-MM-DD)",
        },
        {
            "name": "date_to",
            "type": "string",
            "required": True,
            "description": "last day (YYYY-MM-DD)",
        },
    ]
    output_schema = [
        {
            "name": "days",
            "type": "list",
            "required": True,
            "description": "per-day conditions in the range",
        },
        {
            "name": "adverse_days",
            "type": "number",
            "required": True,
            "description": "how many days in the range are adverse",
        },
    ]

    def __init__(self, fixture_path: str | Path):
        super().__init__()
        self._rows = _read_jsonl(fixture_path)
        self._cities = {r["city"] for r in self._rows}

    def handle(self, params: dict[str, Any]) -> dict[str, Any]:
        city = params["city"]
        if city not in self._cities:
            raise ServiceError("unknown_city", f"city {city!r} not in fixture")
        if params["date_from"] > params["date_to"]:
            raise ServiceError("bad_date_range", "date_from is after date_to")
        days = sorted(
            (
                {"date": r["date"], "condition": r["condition"]}
                for r in self._rows
                if r["city"] == city
                and params["date_from"] <= r["date"] <= params["date_to"]
            ),
            key=lambda d: d["date"],
        )
        adverse = sum(
            1
            for r in self._rows
            if r["city"] == city
            and params["date_from"] <= r["date"] <= params["date_to"]
            and r.get("adverse", False)
        )
        return {"days": days, "adverse_days": adverse}


# --- invocation transport ----------------------------------------------------------

class ToolInvoker(Protocol):
    def invoke(self, endpoint: str, req: InvokeRequest) -> InvokeResponse:  # pragma: no cover
        ...


@dataclass
class InProcessInvoker:
    """Single-process transport: endpoint -> service object."""

    services: dict[str, ToolService] = field(default_factory=dict)

    def add(self, endpoint: str, service: ToolService) -> None:
        self.services[endpoint] = service

    def invoke(self, endpoint: str, req: InvokeRequest) -> InvokeResponse:
        service = self.services.get(endpoint)
        if service is None:
            raise ToolInvocationError(f"no service at {endpoint}")
        return service.invoke(req)


class HttpInvoker:
    """Multi-process transport over the HTTP invoke contract."""

    def __init__(self, timeout_s: float = 30.0):
        self._timeout = timeout_s

    def invoke(self, endpoint: str, req: InvokeRequest) -> InvokeResponse:
        import httpx

        try:
            resp = httpx.post(
                endpoint.rstrip("/") + "/invoke",
                json={"invocation_id": req.invocation_id, "params": req.params},
                timeout=self._timeout,
            )
        except httpx.HTTPError as exc:
            raise ToolInvocationError(str(exc)) from exc
        if resp.status_code >= 500:
            raise ToolInvocationError(f"tool returned {resp.status_code}")
        try:
            doc = resp.json()
        except ValueError as exc:
            raise ToolInvocationError("malformed tool reply") from exc
        return InvokeResponse(
            invocation_id=doc.get("invocation_id", req.invocation_id),
            status=doc.get("status", "error"),
            result=doc.get("result"),
            error_message=doc.get("error_message"),
            error_code=doc.get("error_code"),
        )
