"""External gateway backend: forwards completions to a configured HTTP
endpoint. Disabled by default and never exercised by tests; the documented
request shape is ``POST {gateway_url}`` with body
``{"kind": ..., "payload": ..., "budget": ...}`` returning ``{"text": ...}``.
"""

from __future__ import annotations

import threading

import httpx

from ..errors import GatewayError, GatewayTimeout
from .base import Reasoner, ReasonerRequest, ReasonerResponse


class GatewayBackend(Reasoner):
    name = "gateway"

    def __init__(self, url: str, timeout_ms: int = 10_000, max_in_flight: int = 4):
        if not url:
            raise ValueError("gateway backend requires a gateway_url")
        self._url = url
        self._timeout = timeout_ms / 1000.0
        self._slots = threading.Semaphore(max_in_flight)

    def complete(self, req: ReasonerRequest) -> ReasonerResponse:
        body = {"kind": req.kind, "payload": req.payload, "budget": req.budget}
        with self._slots:
            try:
                resp = httpx.post(self._url, json=body, timeout=self._timeout)
            except httpx.TimeoutException as exc:
                raise GatewayTimeout(str(exc)) from exc
            except httpx.HTTPError as exc:
                raise GatewayError(str(exc)) from exc
        if resp.status_code // 100 != 2:
            raise GatewayError(f"gateway returned {resp.status_code}")
        try:
            text = resp.json()["text"]
        except (KeyError, ValueError) as exc:
            raise GatewayError(f"malformed gateway reply: {exc}") from exc
        if req.budget and len(text) > req.budget:
            raise GatewayError(
                f"completion exceeds budget ({len(text)} > {req.budget} chars)"
            )
        return ReasonerResponse(text=text, backend=self.name, deterministic=False)
