"""Boot configuration: one JSON file configures every capability.

Relative paths (reasoner script, storage directory) resolve against the
directory containing the config file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .reasoner import ReasonerConfig
from .registry import RegistryConfig
from .workflow import WorkflowConfig

DEMO_DIR = Path(__file__).parent / "fixtures" / "demo"
GOLDEN_DIR = Path(__file__).parent / "fixtures" / "golden"
DEFAULT_CONFIG_PATH = DEMO_DIR / "config.json"


@dataclass
class BrokerSettings:
    broker_id: str = "broker-demo"
    heartbeat_interval_s: float = 10.0
    jitter_fraction: float = 0.1
    probe_timeout_s: float = 2.0


@dataclass
class HttpSettings:
    host: str = "127.0.0.1"
    base_port: int = 8040


@dataclass
class BootConfig:
    reasoner: ReasonerConfig = field(default_factory=ReasonerConfig)
    registry: RegistryConfig = field(default_factory=RegistryConfig)
    workflow: WorkflowConfig = field(default_factory=WorkflowConfig)
    broker: BrokerSettings = field(default_factory=BrokerSettings)
    http: HttpSettings = field(default_factory=HttpSettings)
    entity_rules: list[dict[str, Any]] = field(default_factory=list)
    match_threshold: int = 1
    storage_dir: str | None = None  # None = in-memory stores

    def store_path(self, name: str) -> str:
        if self.storage_dir is None:
            return ":memory:"
        root = Path(self.storage_dir)
        root.mkdir(parents=True, exist_ok=True)
        return str(root / f"{name}.sqlite")


def _apply(target: Any, values: dict[str, Any]) -> None:
    for key, value in values.items():
        if hasattr(target, key):
            setattr(target, key, value)


def load_config(path: str | Path | None = None) -> BootConfig:
    config = BootConfig()
    if path is None:
        path = DEFAULT_CONFIG_PATH
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    base = path.parent

    _apply(config.reasoner, raw.get("reasoner", {}))
    _apply(config.registry, raw.get("registry", {}))
    _apply(config.workflow, raw.get("workflow", {}))
    _apply(config.broker, raw.get("broker", {}))
    _apply(config.http, raw.get("http", {}))
    config.entity_rules = raw.get("reception", {}).get("entity_rules", [])
    config.match_threshold = raw.get("matching", {}).get("overlap_threshold", 1)
    storage = raw.get("storage", {})
    if storage.get("dir"):
        config.storage_dir = str((base / storage["dir"]).resolve())

    if config.reasoner.script_path:
        script = Path(config.reasoner.script_path)
        if not script.is_absolute():
            config.reasoner.script_path = str((base / script).resolve())
    return config
