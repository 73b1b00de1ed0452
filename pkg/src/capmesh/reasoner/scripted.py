"""Scripted reasoner backend: canned completions keyed by request content.

The script file maps ``"<kind>:<payload-hash>"`` to completion text. Payloads
are hashed over their canonical JSON form (sorted keys), so fixtures stay
stable as long as the request content does. A missing key raises
:class:`ScriptMiss` loudly; tests must never fall through to another backend
unnoticed.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

from ..errors import ScriptMiss
from ..util import payload_hash
from .base import Reasoner, ReasonerRequest, ReasonerResponse


def script_key(kind: str, payload: dict[str, Any]) -> str:
    return f"{kind}:{payload_hash(payload)}"


class ScriptedBackend(Reasoner):
    name = "scripted"

    def __init__(self, script: dict[str, str]):
        self._script = dict(script)

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedBackend":
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh))

    def complete(self, req: ReasonerRequest) -> ReasonerResponse:
        key = script_key(req.kind, req.payload)
        if key not in self._script:
            raise ScriptMiss(
                f"no scripted completion for {key} "
                f"(known: {', '.join(sorted(self._script)) or 'none'})"
            )
        return ReasonerResponse(
            text=self._script[key], backend=self.name, deterministic=True
        )
