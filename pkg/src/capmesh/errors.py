"""Exception types shared across the capability services.

Every error that crosses a service boundary carries a stable ``code`` so the
HTTP layer can emit ``{error_code, message}`` bodies without inspecting types.
"""

from __future__ import annotations


class CapmeshError(Exception):
    """Base class for all service errors."""

    code = "internal_error"

    def __init__(self, message: str = ""):
        super().__init__(message or self.__class__.__name__)
        self.message = message or self.__class__.__name__


class ValidationError(CapmeshError):
    """A document or descriptor violates its invariants.

    ``items`` lists every violation found, not just the first.
    """

    code = "validation_error"

    def __init__(self, items: list[str]):
        self.items = list(items)
        super().__init__("; ".join(self.items) or "validation failed")


# --- reception ---------------------------------------------------------------

class EmptyRequest(CapmeshError):
    code = "empty_request"


class DownstreamUnavailable(CapmeshError):
    code = "downstream_unavailable"


class UnknownTask(CapmeshError):
    code = "unknown_task"


# --- planning ----------------------------------------------------------------

class PlanningFailed(CapmeshError):
    code = "planning_failed"


class PlanParseError(CapmeshError):
    """Reasoner plan document rejected; ``path`` points at the offending node."""

    code = "plan_parse_error"

    def __init__(self, message: str, path: str = "$"):
        self.path = path
        super().__init__(f"{path}: {message}")


# --- workflow ----------------------------------------------------------------

class MissingInput(CapmeshError):
    code = "missing_input"

    def __init__(self, keys: list[str]):
        self.keys = list(keys)
        super().__init__(f"missing context keys: {', '.join(self.keys)}")


class StepTimeout(CapmeshError):
    code = "step_timeout"


class ToolInvocationError(CapmeshError):
    code = "tool_invocation_error"


class LoopBoundExceeded(CapmeshError):
    code = "loop_bound_exceeded"


class DeliveryFailed(CapmeshError):
    code = "delivery_failed"


# --- condition mini-language ---------------------------------------------------

class ConditionParseError(CapmeshError):
    code = "condition_parse_error"

    def __init__(self, message: str, position: int = 0):
        self.position = position
        super().__init__(f"at {position}: {message}")


class ConditionEvalError(CapmeshError):
    code = "condition_eval_error"


# --- methodology store ---------------------------------------------------------

class UnknownMethodology(CapmeshError):
    code = "unknown_methodology"


class BadPosition(CapmeshError):
    code = "bad_position"


class VersionConflict(CapmeshError):
    code = "version_conflict"


# --- tool registry / broker ----------------------------------------------------

class DuplicateToolOtherBroker(CapmeshError):
    code = "duplicate_tool_other_broker"


class UnknownBroker(CapmeshError):
    code = "unknown_broker"


class NoToolFound(CapmeshError):
    """Discovery found no available tool above threshold.

    This is a normal signal (the trigger for tool registration), not a crash.
    """

    code = "no_tool_found"


class RegistryUnreachable(CapmeshError):
    code = "registry_unreachable"


class ProbeUnhealthy(CapmeshError):
    code = "probe_unhealthy"


# --- reasoner ------------------------------------------------------------------

class ScriptMiss(CapmeshError):
    code = "script_miss"


class GatewayTimeout(CapmeshError):
    code = "gateway_timeout"


class GatewayError(CapmeshError):
    code = "gateway_error"


# --- harness ---------------------------------------------------------------------

class BootTimeout(CapmeshError):
    code = "boot_timeout"


class SeedValidationError(CapmeshError):
    code = "seed_validation_error"


class ScenarioFailed(CapmeshError):
    code = "scenario_failed"
