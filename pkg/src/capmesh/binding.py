"""Parameter-binding templates.

Step bindings map tool parameter names to values containing
``{context.<path>}`` placeholders. A value that is exactly one placeholder is
passed structurally (lists and records keep their type); placeholders embedded
in a longer string substitute as text. Paths are dotted and may index lists:
``candidate_cities.0.name``.
"""

from __future__ import annotations

import json
import re
from typing import Any

_PLACEHOLDER_RE = re.compile(r"\{context\.([A-Za-z_][A-Za-z0-9_]*(?:\.[A-Za-z0-9_]+)*)\}")


class BindingError(KeyError):
    def __init__(self, path: str, reason: str):
        super().__init__(path)
        self.path = path
        self.reason = reason

    def __str__(self) -> str:
        return f"{self.path}: {self.reason}"


def resolve_path(context: dict[str, Any], path: str) -> Any:
    value: Any = context
    for seg in path.split("."):
        if isinstance(value, dict):
            if seg not in value:
                raise BindingError(path, f"missing key {seg!r}")
            value = value[seg]
        elif isinstance(value, list):
            if not seg.isdigit() or int(seg) >= len(value):
                raise BindingError(path, f"bad list index {seg!r}")
            value = value[int(seg)]
        else:
            raise BindingError(path, f"cannot descend into {type(value).__name__}")
    return value


def _as_text(value: Any) -> str:
    if isinstance(value, str):
        return value
    return json.dumps(value, sort_keys=True, separators=(",", ":"))


def bind_value(value: Any, context: dict[str, Any]) -> Any:
    if isinstance(value, str):
        whole = _PLACEHOLDER_RE.fullmatch(value)
        if whole:
            return resolve_path(context, whole.group(1))
        return _PLACEHOLDER_RE.sub(
            lambda m: _as_text(resolve_path(context, m.group(1))), value
        )
    if isinstance(value, dict):
        return {k: bind_value(v, context) for k, v in value.items()}
    if isinstance(value, list):
        return [bind_value(v, context) for v in value]
    return value


def bind_template(template: dict[str, Any], context: dict[str, Any]) -> dict[str, Any]:
    return {name: bind_value(value, context) for name, value in template.items()}


def referenced_roots(template: Any) -> set[str]:
    """Root context keys a template reads; used by the plan validator."""
    roots: set[str] = set()
    if isinstance(template, str):
        for m in _PLACEHOLDER_RE.finditer(template):
            roots.add(m.group(1).split(".", 1)[0])
    elif isinstance(template, dict):
        for v in template.values():
            roots |= referenced_roots(v)
    elif isinstance(template, list):
        for v in template:
            roots |= referenced_roots(v)
    return roots
