"""Tool registry and executor with risk-gated human approval.

LOW-risk tools execute immediately and never create approval records.
HIGH-risk tools enqueue an ApprovalRequest and execute only after an
APPROVED decision; every transition and execution is append-logged so a
run can be audited mechanically.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Dict, List, Optional

import jsonschema

from .errors import AlreadyDecided, ArgSchemaViolation, DuplicateTool, UnknownApproval, UnknownTool
from .runtime import Runtime, WaitCell

APPROVAL_TTL_SECONDS = 900


class Risk(str, Enum):
    LOW = "LOW"
    HIGH = "HIGH"


class ToolStatus(str, Enum):
    OK = "OK"
    FAILED = "FAILED"
    TIMEOUT = "TIMEOUT"
    DENIED = "DENIED"


class Decision(str, Enum):
    PENDING = "PENDING"
    APPROVED = "APPROVED"
    DENIED = "DENIED"
    EXPIRED = "EXPIRED"


@dataclass
class ToolSpec:
    name: str
    description: str
    risk: Risk
    param_schema: dict
    executor: Callable[[dict, int], dict]  # (args, now_ms) -> output map
    timeout_seconds: float = 30.0
    _validator: object = None

    def validate_args(self, args: dict) -> None:
        if self._validator is None:
            self._validator = jsonschema.Draft202012Validator(self.param_schema)
        errors = sorted(self._validator.iter_errors(args), key=lambda e: str(list(e.absolute_path)))
        if errors:
            raise ArgSchemaViolation(f"tool {self.name}: {errors[0].message}")


@dataclass
class ToolResult:
    tool: str
    status: ToolStatus
    output: Dict[str, Any]
    started_at: int
    finished_at: int

    def to_json(self) -> dict:
        return {
            "tool": self.tool,
            "status": self.status.value,
            "output": self.output,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
        }

    def body_text(self) -> str:
        parts = [self.tool, self.status.value]
        parts += [f"{k}={v}" for k, v in sorted(self.output.items())]
        return " ".join(parts)


@dataclass
class ApprovalRequest:
    approval_id: str
    incident_id: str
    tool: str
    args: Dict[str, Any]
    risk: Risk
    requested_at: int
    decision: Decision = Decision.PENDING
    decided_by: Optional[str] = None
    decided_at: Optional[int] = None
    result: Optional[ToolResult] = None
    cell: Optional[WaitCell] = None  # set() on any terminal decision

    def to_json(self) -> dict:
        return {
            "approval_id": self.approval_id,
            "incident_id": self.incident_id,
            "tool": self.tool,
            "args": self.args,
            "risk": self.risk.value,
            "requested_at": self.requested_at,
            "decision": self.decision.value,
            "decided_by": self.decided_by,
            "decided_at": self.decided_at,
        }


@dataclass
class Execution:
    """Immutable outcome of request_execution: either a result or a pending approval."""

    result: Optional[ToolResult] = None
    approval_id: Optional[str] = None

    @property
    def pending(self) -> bool:
        return self.approval_id is not None and self.result is None


class ActionRuntime:
    def __init__(self, runtime: Runtime):
        self.runtime = runtime
        self._tools: Dict[str, ToolSpec] = {}
        self._approvals: Dict[str, ApprovalRequest] = {}
        self._lock = threading.RLock()
        self._counter = 0
        # Append-only audit log: approval transitions and tool executions.
        self.audit_log: List[dict] = []

    # -- registry -----------------------------------------------------------

    def register_tool(self, spec: ToolSpec) -> None:
        with self._lock:
            if spec.name in self._tools:
                raise DuplicateTool(spec.name)
            if spec.timeout_seconds <= 0:
                raise ArgSchemaViolation(f"tool {spec.name}: timeout must be > 0")
            self._tools[spec.name] = spec

    def has_tool(self, name: str) -> bool:
        with self._lock:
            return name in self._tools

    def tool_names(self) -> List[str]:
        with self._lock:
            return sorted(self._tools)

    # -- execution ----------------------------------------------------------

    def request_execution(self, incident_id: str, tool: str, args: dict) -> Execution:
        with self._lock:
            spec = self._tools.get(tool)
            if spec is None:
                raise UnknownTool(tool)
            spec.validate_args(args)
            if spec.risk == Risk.HIGH:
                self._counter += 1
                req = ApprovalRequest(
                    approval_id=f"APR-{self._counter:06d}",
                    incident_id=incident_id,
                    tool=tool,
                    args=dict(args),
                    risk=spec.risk,
                    requested_at=self.runtime.now_ms(),
                    cell=self.runtime.new_cell(),
                )
                self._approvals[req.approval_id] = req
                self._log("approval_requested", req)
                return Execution(approval_id=req.approval_id)
        result = self._execute(spec, args, incident_id, approval_id=None)
        return Execution(result=result)

    def _execute(self, spec: ToolSpec, args: dict, incident_id: str, approval_id: Optional[str]) -> ToolResult:
        started = self.runtime.now_ms()
        try:
            output = spec.executor(dict(args), started)
            status = ToolStatus(output.pop("_status", ToolStatus.OK.value))
        except Exception as exc:  # executor failure is a tool FAILED, not an engine crash
            output = {"error": str(exc)}
            status = ToolStatus.FAILED
        finished = self.runtime.now_ms()
        if finished - started > spec.timeout_seconds * 1000:
            status = ToolStatus.TIMEOUT
        result = ToolResult(tool=spec.name, status=status, output=output, started_at=started, finished_at=finished)
        with self._lock:
            self.audit_log.append(
                {
                    "event": "tool_executed",
                    "tool": spec.name,
                    "risk": spec.risk.value,
                    "incident_id": incident_id,
                    "approval_id": approval_id,
                    "status": status.value,
                    "started_at": started,
                }
            )
        return result

    # -- approvals ----------------------------------------------------------

    def get_approval(self, approval_id: str) -> ApprovalRequest:
        with self._lock:
            req = self._approvals.get(approval_id)
            if req is None:
                raise UnknownApproval(approval_id)
            return req

    def pending_approvals(self) -> List[ApprovalRequest]:
        with self._lock:
            reqs = [r for r in self._approvals.values() if r.decision == Decision.PENDING]
        return sorted(reqs, key=lambda r: (r.requested_at, r.approval_id))

    def all_approvals(self) -> List[ApprovalRequest]:
        with self._lock:
            return sorted(self._approvals.values(), key=lambda r: r.approval_id)

    def resolve_approval(self, approval_id: str, decision: Decision, actor: str) -> ToolResult:
        with self._lock:
            req = self._approvals.get(approval_id)
            if req is None:
                raise UnknownApproval(approval_id)
            if req.decision != Decision.PENDING:
                raise AlreadyDecided(f"{approval_id} already {req.decision.value}")
            if decision not in (Decision.APPROVED, Decision.DENIED):
                raise ArgSchemaViolation(f"decision must be approved or denied, got {decision}")
            req.decision = decision
            req.decided_by = actor
            req.decided_at = self.runtime.now_ms()
            self._log("approval_decided", req)
            spec = self._tools[req.tool]
        if decision == Decision.APPROVED:
            result = self._execute(spec, req.args, req.incident_id, approval_id=approval_id)
        else:
            now = self.runtime.now_ms()
            result = ToolResult(req.tool, ToolStatus.DENIED, {"denied_by": actor}, now, now)
        req.result = result
        if req.cell is not None:
            req.cell.set(result)
        return result

    def expire_stale(self, now_ms: int, ttl_seconds: float = APPROVAL_TTL_SECONDS) -> List[str]:
        expired: List[ApprovalRequest] = []
        with self._lock:
            for req in self._approvals.values():
                if req.decision == Decision.PENDING and now_ms - req.requested_at > ttl_seconds * 1000:
                    req.decision = Decision.EXPIRED
                    req.decided_at = now_ms
                    self._log("approval_expired", req)
                    expired.append(req)
        for req in expired:
            result = ToolResult(req.tool, ToolStatus.FAILED, {"reason": "approval expired"}, now_ms, now_ms)
            req.result = result
            if req.cell is not None:
                req.cell.set(result)
        return [r.approval_id for r in expired]

    def _log(self, event: str, req: ApprovalRequest) -> None:
        self.audit_log.append(
            {
                "event": event,
                "approval_id": req.approval_id,
                "incident_id": req.incident_id,
                "tool": req.tool,
                "risk": req.risk.value,
                "decision": req.decision.value,
                "decided_by": req.decided_by,
                "decided_at": req.decided_at,
                "requested_at": req.requested_at,
            }
        )


def audit_approval_safety(runtime: ActionRuntime) -> List[str]:
    """Mechanical safety audit over a run's append log.

    Violations: a HIGH-risk execution without exactly one prior APPROVED
    decision for its approval id, or any LOW-risk execution that carries an
    approval record.
    """
    violations: List[str] = []
    approvals_by_id: Dict[str, List[dict]] = {}
    for entry in runtime.audit_log:
        if entry["event"] == "approval_decided" and entry["decision"] == Decision.APPROVED.value:
            approvals_by_id.setdefault(entry["approval_id"], []).append(entry)
    for entry in runtime.audit_log:
        if entry["event"] != "tool_executed":
            continue
        if entry["risk"] == Risk.HIGH.value:
            approved = approvals_by_id.get(entry["approval_id"] or "", [])
            if len(approved) != 1:
                violations.append(
                    f"HIGH-risk {entry['tool']} executed with {len(approved)} APPROVED records"
                )
            elif approved[0]["decided_at"] > entry["started_at"]:
                violations.append(f"HIGH-risk {entry['tool']} executed before approval decision")
        else:
            if entry["approval_id"]:
                violations.append(f"LOW-risk {entry['tool']} carries approval {entry['approval_id']}")
    return violations
