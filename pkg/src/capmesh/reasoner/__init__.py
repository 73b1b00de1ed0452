"""Pluggable reasoner: one completion interface, three backends."""

from __future__ import annotations

from .base import KINDS, Reasoner, ReasonerConfig, ReasonerRequest, ReasonerResponse
from .gateway import GatewayBackend
from .rules import RulesBackend, derive_plan_document
from .scripted import ScriptedBackend, script_key

__all__ = [
    "KINDS",
    "Reasoner",
    "ReasonerConfig",
    "ReasonerRequest",
    "ReasonerResponse",
    "RulesBackend",
    "ScriptedBackend",
    "GatewayBackend",
    "script_key",
    "derive_plan_document",
    "build_reasoner",
]


def build_reasoner(config: ReasonerConfig) -> Reasoner:
    if config.backend == "rules":
        return RulesBackend()
    if config.backend == "scripted":
        if not config.script_path:
            raise ValueError("scripted backend requires script_path")
        return ScriptedBackend.from_file(config.script_path)
    if config.backend == "gateway":
        if not config.gateway_url:
            raise ValueError("gateway backend requires gateway_url")
        return GatewayBackend(
            config.gateway_url,
            timeout_ms=config.timeout_ms,
            max_in_flight=config.max_in_flight,
        )
    raise ValueError(f"unknown reasoner backend {config.backend!r}")
