"""capmesh: capability-collaboration agent runtime.

Cooperating services (reception, workflow, planning, methodology, profile,
tool registry/broker, demo tool services) execute user tasks through plan
decomposition and registry-mediated tool discovery, with a deterministic
pluggable reasoner behind every completion.
"""

__version__ = "0.1.0"

from .config import BootConfig, load_config
from .harness import Stack, boot, run_scenario, seed

__all__ = [
    "BootConfig",
    "load_config",
    "Stack",
    "boot",
    "seed",
    "run_scenario",
    "__version__",
]
