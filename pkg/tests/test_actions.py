import random

import pytest

from opstriage.actions import (
    ActionRuntime,
    Decision,
    Risk,
    ToolSpec,
    ToolStatus,
    audit_approval_safety,
)
from opstriage.errors import (
    AlreadyDecided,
    ArgSchemaViolation,
    DuplicateTool,
    UnknownApproval,
    UnknownTool,
)
from opstriage.runtime import InlineRuntime

PARAMS = {"type": "object", "required": ["target"], "properties": {"target": {"type": "string"}}}


def runtime_with_tools():
    rt = InlineRuntime(start_ms=1000)
    actions = ActionRuntime(rt)
    actions.register_tool(ToolSpec("validate_content", "validate", Risk.LOW, PARAMS,
                                   lambda args, now: {"line_number": 7, "error_description": "bad brace"}))
    actions.register_tool(ToolSpec("restart_job", "restart", Risk.HIGH, PARAMS,
                                   lambda args, now: {"result": "restarted"}))
    return rt, actions


def test_register_and_duplicate():
    _, actions = runtime_with_tools()
    assert actions.tool_names() == ["restart_job", "validate_content"]
    with pytest.raises(DuplicateTool):
        actions.register_tool(ToolSpec("restart_job", "again", Risk.LOW, PARAMS, lambda a, n: {}))


def test_low_risk_executes_immediately_without_approvals():
    _, actions = runtime_with_tools()
    execution = actions.request_execution("INC-1", "validate_content", {"target": "frag"})
    assert not execution.pending
    assert execution.result.status == ToolStatus.OK
    assert execution.result.output == {"line_number": 7, "error_description": "bad brace"}
    assert actions.all_approvals() == []


def test_high_risk_pends_approval():
    _, actions = runtime_with_tools()
    execution = actions.request_execution("INC-1", "restart_job", {"target": "svc"})
    assert execution.pending
    pending = actions.pending_approvals()
    assert [p.approval_id for p in pending] == [execution.approval_id]
    assert pending[0].decision == Decision.PENDING
    # no execution may exist before the decision
    assert not [e for e in actions.audit_log if e["event"] == "tool_executed"]


def test_unknown_tool_and_bad_args():
    _, actions = runtime_with_tools()
    with pytest.raises(UnknownTool):
        actions.request_execution("INC-1", "nope", {})
    with pytest.raises(ArgSchemaViolation):
        actions.request_execution("INC-1", "validate_content", {})


def test_approve_executes():
    rt, actions = runtime_with_tools()
    execution = actions.request_execution("INC-1", "restart_job", {"target": "svc"})
    result = actions.resolve_approval(execution.approval_id, Decision.APPROVED, actor="oncall")
    assert result.status == ToolStatus.OK
    req = actions.get_approval(execution.approval_id)
    assert req.decision == Decision.APPROVED and req.decided_by == "oncall"
    assert req.decided_at <= result.started_at
    assert audit_approval_safety(actions) == []


def test_deny_returns_denied_result():
    _, actions = runtime_with_tools()
    execution = actions.request_execution("INC-1", "restart_job", {"target": "svc"})
    result = actions.resolve_approval(execution.approval_id, Decision.DENIED, actor="oncall")
    assert result.status == ToolStatus.DENIED
    assert not [e for e in actions.audit_log if e["event"] == "tool_executed"]


def test_double_resolve_rejected():
    _, actions = runtime_with_tools()
    execution = actions.request_execution("INC-1", "restart_job", {"target": "svc"})
    actions.resolve_approval(execution.approval_id, Decision.APPROVED, actor="a")
    with pytest.raises(AlreadyDecided):
        actions.resolve_approval(execution.approval_id, Decision.DENIED, actor="b")


def test_unknown_approval():
    _, actions = runtime_with_tools()
    with pytest.raises(UnknownApproval):
        actions.resolve_approval("APR-999999", Decision.APPROVED, actor="x")


def test_expire_stale_exact_subset():
    rt, actions = runtime_with_tools()
    ids = []
    ages_s = [1000, 100, 901, 899, 2000]
    for age in ages_s:
        rt.set_now_ms(rt.now_ms())  # no-op, clarity
        execution = actions.request_execution("INC-1", "restart_job", {"target": f"svc-{age}"})
        req = actions.get_approval(execution.approval_id)
        req.requested_at = 10_000_000 - age * 1000
        ids.append((execution.approval_id, age))
    rt.set_now_ms(10_000_000)
    expired = set(actions.expire_stale(10_000_000, ttl_seconds=900))
    expected = {aid for aid, age in ids if age > 900}  # scan oracle
    assert expired == expected
    for aid, age in ids:
        want = Decision.EXPIRED if age > 900 else Decision.PENDING
        assert actions.get_approval(aid).decision == want


def test_expired_cell_carries_failed_result():
    rt, actions = runtime_with_tools()
    execution = actions.request_execution("INC-1", "restart_job", {"target": "svc"})
    rt.advance(901)
    actions.expire_stale(rt.now_ms(), ttl_seconds=900)
    req = actions.get_approval(execution.approval_id)
    assert req.decision == Decision.EXPIRED
    assert req.result.status == ToolStatus.FAILED


def test_executor_exception_becomes_failed_result():
    rt = InlineRuntime()
    actions = ActionRuntime(rt)

    def boom(args, now):
        raise RuntimeError("kaput")

    actions.register_tool(ToolSpec("flaky", "d", Risk.LOW, {"type": "object"}, boom))
    execution = actions.request_execution("INC-1", "flaky", {})
    assert execution.result.status == ToolStatus.FAILED
    assert "kaput" in execution.result.output["error"]


def test_timeout_status():
    rt = InlineRuntime()
    actions = ActionRuntime(rt)

    def slow(args, now):
        rt.advance(10.0)
        return {"ok": True}

    actions.register_tool(ToolSpec("slow", "d", Risk.LOW, {"type": "object"}, slow, timeout_seconds=5))
    execution = actions.request_execution("INC-1", "slow", {})
    assert execution.result.status == ToolStatus.TIMEOUT


def test_audit_detects_unapproved_execution():
    rt, actions = runtime_with_tools()
    # simulate a rogue path writing an execution record with no approval
    actions.audit_log.append(
        {"event": "tool_executed", "tool": "restart_job", "risk": "HIGH",
         "incident_id": "INC-X", "approval_id": None, "status": "OK", "started_at": 1}
    )
    violations = audit_approval_safety(actions)
    assert len(violations) == 1 and "0 APPROVED" in violations[0]


def test_randomized_run_audit_clean():
    rt, actions = runtime_with_tools()
    rng = random.Random(9)
    for i in range(200):
        if rng.random() < 0.5:
            actions.request_execution("INC-1", "validate_content", {"target": f"t{i}"})
        else:
            execution = actions.request_execution("INC-1", "restart_job", {"target": f"t{i}"})
            roll = rng.random()
            if roll < 0.4:
                actions.resolve_approval(execution.approval_id, Decision.APPROVED, actor="op")
            elif roll < 0.7:
                actions.resolve_approval(execution.approval_id, Decision.DENIED, actor="op")
        rt.advance(1.0)
    actions.expire_stale(rt.now_ms(), ttl_seconds=60)
    assert audit_approval_safety(actions) == []
