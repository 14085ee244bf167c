import pytest

from opstriage.log_agent import AnomalyReport
from opstriage.planner import (
    ActionPlan,
    DiagnosticSummary,
    Hypothesis,
    HypothesisKind,
    PlanStep,
    StepKind,
    UncertaintyTag,
)
from opstriage.reasoner import ScriptedBackend
from opstriage.reflection import (
    MAX_REFLECTION_CYCLES,
    ReflectionAgent,
    best_hypothesis_index,
    should_iterate,
)
from opstriage.scenario import adversarial_revise_rules, fallback_rules
from opstriage.telemetry import LogEvent, LogLevel

T0 = 1736121600000


def event(eid, ts, service="aem"):
    return LogEvent(ts=ts, service=service, level=LogLevel.ERROR, message="boom", event_id=eid)


def report(services=("aem",), event_ts=T0 - 1000):
    anomalies, events = [], {}
    for i, svc in enumerate(services):
        ev = event(i, event_ts, svc)
        events[i] = ev
        anomalies.append({"event": ev.to_json(), "classification": "ERROR_EVENT"})
    return AnomalyReport(anomalies=anomalies, causal_candidates=[], trace_chains=[],
                         coverage_note="", events_by_id=events)


def summary(evidence_refs=(("event", "0"),), tool="validate_content", component="aem",
            statement="fault in aem"):
    return DiagnosticSummary(
        incident_id="INC-1",
        headline=f"issue in {component}",
        fault_component=component,
        hypothesis=Hypothesis(statement=statement, fault_component=component,
                              kind=HypothesisKind.DATA_CONTENT, confidence=0.8,
                              evidence_refs=list(evidence_refs)),
        findings={"component": component},
        recommended_action=f"run {tool}" if tool else "figure it out",
        recommended_tool=tool,
        produced_at=T0 + 1000,
    )


def plan():
    return ActionPlan("INC-1", [PlanStep("synthesize", "s", StepKind.SYNTHESIZE)])


def agent(rules=None, tools=("validate_content",), runbooks=("Big Runbook",)):
    backend = ScriptedBackend((rules or []) + fallback_rules())
    return ReflectionAgent(backend, tool_exists=lambda n: n in tools,
                           runbook_titles=lambda: list(runbooks))


def test_grounded_summary_accepts():
    verdict = agent().evaluate(summary(), report(), plan(), cycle=1, fired_at=T0)
    assert verdict.overall == "ACCEPT"
    assert verdict.completeness.passed and verdict.causality.passed and verdict.actionability.passed


def test_empty_evidence_fails_causality():
    verdict = agent().evaluate(summary(evidence_refs=[]), report(), plan(), cycle=1, fired_at=T0)
    assert not verdict.causality.passed
    assert verdict.overall == "REVISE"
    assert verdict.revision_directives


def test_postdated_evidence_fails_causality():
    rep = report(event_ts=T0 + 5000)
    verdict = agent().evaluate(summary(), rep, plan(), cycle=1, fired_at=T0)
    assert not verdict.causality.passed


def test_unregistered_tool_fails_actionability():
    verdict = agent().evaluate(summary(tool="missing_tool"), report(), plan(), cycle=1, fired_at=T0)
    assert not verdict.actionability.passed


def test_runbook_reference_satisfies_actionability():
    s = summary(tool=None)
    s.recommended_action = "follow the Big Runbook to remediate"
    verdict = agent().evaluate(s, report(), plan(), cycle=1, fired_at=T0)
    assert verdict.actionability.passed


def test_uncovered_service_fails_completeness():
    rep = report(services=("aem", "payments-db"))
    verdict = agent().evaluate(summary(), rep, plan(), cycle=1, fired_at=T0)
    assert not verdict.completeness.passed
    covered = summary(statement="fault in aem propagating to payments-db")
    verdict2 = agent().evaluate(covered, rep, plan(), cycle=1, fired_at=T0)
    assert verdict2.completeness.passed


def test_model_can_only_downgrade():
    adversarial = agent(rules=adversarial_revise_rules())
    verdict = adversarial.evaluate(summary(), report(), plan(), cycle=1, fired_at=T0)
    assert verdict.overall == "REVISE"  # mechanical passes, model downgrades
    # and a passing model cannot override a mechanical failure
    verdict2 = agent().evaluate(summary(evidence_refs=[]), report(), plan(), cycle=1, fired_at=T0)
    assert verdict2.overall == "REVISE"


def test_cycle_bounds_enforced():
    with pytest.raises(ValueError):
        agent().evaluate(summary(), report(), plan(), cycle=0, fired_at=T0)
    with pytest.raises(ValueError):
        agent().evaluate(summary(), report(), plan(), cycle=6, fired_at=T0)


# -- should_iterate -----------------------------------------------------------

def verdict_with(overall_pass: bool, cycle: int):
    return agent(rules=None if overall_pass else adversarial_revise_rules()).evaluate(
        summary(), report(), plan(), cycle=cycle, fired_at=T0
    )


def test_accept_finalizes_untagged():
    outcome = should_iterate(verdict_with(True, 1), cycle=1)
    assert outcome.action == "FINALIZE" and outcome.tag is None


def test_revise_midway_continues():
    outcome = should_iterate(verdict_with(False, 3), cycle=3)
    assert outcome.action == "CONTINUE"
    assert outcome.directives


def test_revise_at_limit_finalizes_tagged():
    outcome = should_iterate(verdict_with(False, MAX_REFLECTION_CYCLES), cycle=MAX_REFLECTION_CYCLES)
    assert outcome.action == "FINALIZE"
    assert outcome.tag == UncertaintyTag.LOW_CONFIDENCE_TIMEOUT


def test_best_hypothesis_ties_go_to_latest():
    assert best_hypothesis_index([0.5, 0.9, 0.9, 0.3]) == 2
    assert best_hypothesis_index([0.1]) == 0
    assert best_hypothesis_index([0.2, 0.2, 0.2]) == 2
