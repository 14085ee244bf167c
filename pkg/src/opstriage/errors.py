"""Exception hierarchy shared across the triage engine."""

from __future__ import annotations


class TriageError(Exception):
    """Base class for all engine errors."""


# --- alert gateway ---

class MalformedPayload(TriageError):
    pass


class SchemaViolation(TriageError):
    pass


class UnknownSeverity(TriageError):
    pass


class StorageFailure(TriageError):
    pass


# --- telemetry store ---

class Throttled(TriageError):
    """No rate-limit permit available; retry_after is seconds until one is reserved for the caller."""

    def __init__(self, retry_after: float):
        super().__init__(f"throttled, retry after {retry_after:.3f}s")
        self.retry_after = retry_after


class InvalidQuery(TriageError):
    pass


class LogRetrievalUnavailable(TriageError):
    pass


# --- knowledge store ---

class EmptyBody(TriageError):
    pass


class EmptyIndex(TriageError):
    pass


# --- reasoner backend ---

class NoRuleMatched(TriageError):
    pass


class BackendUnavailable(TriageError):
    pass


class MalformedModelOutput(TriageError):
    """Model output failed schema validation; `path` names the first violation."""

    def __init__(self, path: str, detail: str = ""):
        super().__init__(f"malformed model output at {path}" + (f": {detail}" if detail else ""))
        self.path = path


# --- action runtime ---

class DuplicateTool(TriageError):
    pass


class UnknownTool(TriageError):
    pass


class ArgSchemaViolation(TriageError):
    pass


class UnknownApproval(TriageError):
    pass


class AlreadyDecided(TriageError):
    pass


# --- planner ---

class GroundingViolation(TriageError):
    """A diagnostic finding has no supporting evidence body containing its value."""


class PlanInvalid(TriageError):
    pass


# --- orchestrator ---

class TerminalState(TriageError):
    pass


# --- scenario / metrics / cli ---

class InvalidSpec(TriageError):
    pass


class NoSummarizedIncidents(TriageError):
    pass


class MissingGroundTruth(TriageError):
    pass


class EmptySteps(TriageError):
    pass


class ConfigConflict(TriageError):
    def __init__(self, key: str, detail: str = ""):
        super().__init__(f"config conflict on {key!r}" + (f": {detail}" if detail else ""))
        self.key = key


# --- runtime kernel ---

class RuntimeDeadlock(TriageError):
    """The simulated scheduler has live waiters but no runnable work."""
