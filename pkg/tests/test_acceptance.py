"""Acceptance suite: one test per release criterion, each printing a PASS line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines. Everything runs on the scripted reasoner; replays use fixed seeds.
"""

import json
import random
import time

import pytest
from engine_utils import build_engine, make_alert

from opstriage.gateway import DedupMode, DedupPolicy, IncidentState, Severity, is_legal_transition
from opstriage.metrics import compute_ar, compute_ela, compute_eer, compute_mtti, format_percent
from opstriage.planner import UncertaintyTag
from opstriage.replay import run_replay
from opstriage.runtime import InlineRuntime
from opstriage.scenario import adversarial_revise_rules
from opstriage.telemetry import LogEvent, LogLevel, LogQuery, TelemetryStore

SEED = 7


def _pass(criterion: int, detail: str) -> None:
    print(f"\n[acceptance] criterion {criterion}: PASS - {detail}")


@pytest.fixture(scope="module")
def case_replay(case_study_spec):
    t0 = time.monotonic()
    result = run_replay(case_study_spec, SEED)
    result.wall_seconds = time.monotonic() - t0
    return result


@pytest.fixture(scope="module")
def case_replay_repeat(case_study_spec):
    return run_replay(case_study_spec, SEED)


@pytest.fixture(scope="module")
def case_replay_sequential(case_study_spec):
    return run_replay(case_study_spec, SEED, parallel_fetch=False)


@pytest.fixture(scope="module")
def generic_replay(generic_spec):
    return run_replay(generic_spec, SEED)


@pytest.fixture(scope="module")
def generic_auto_approve(generic_spec):
    return run_replay(generic_spec, SEED, approval_policy="auto_approve")


@pytest.fixture(scope="module")
def throttled_pair(throttle_spec):
    throttled = run_replay(throttle_spec, 11)
    unlimited = run_replay(throttle_spec, 11, rate_limit=None)
    return throttled, unlimited


def test_criterion_1_case_study_replay(case_replay):
    """72 content-validation alerts over a simulated 12-week window; agent
    cohort EER exactly 0.75; wall clock under 30 s."""
    assert len(case_replay.generated.alerts) == 72
    assert case_replay.ingested_alerts == 72
    assert len(case_replay.incidents) == 72
    span_ms = case_replay.spec.duration_s * 1000
    offsets = [a.fired_at - case_replay.spec.start_at_ms for a in case_replay.generated.alerts]
    assert all(0 <= off < span_ms for off in offsets)
    assert max(offsets) - min(offsets) > span_ms * 0.5  # spread across the window
    assert case_replay.agent_report.eer == 0.75
    assert case_replay.wall_seconds < 30.0
    _pass(1, f"72 alerts across 12 simulated weeks, EER=0.75 exactly, "
             f"replay took {case_replay.wall_seconds:.2f}s wall")


def test_criterion_2_timing_reproduction(case_replay):
    """Agent MTTI within [1.2, 2.0] min; manual within [10, 15]; ratio >= 5x."""
    agent_mtti = case_replay.agent_report.mtti_minutes
    manual_mtti = case_replay.manual_report.mtti_minutes
    assert 1.2 <= agent_mtti <= 2.0
    assert 10.0 <= manual_mtti <= 15.0
    assert manual_mtti / agent_mtti >= 5.0
    _pass(2, f"agent MTTI {agent_mtti:.2f} min, manual {manual_mtti:.2f} min, "
             f"ratio {manual_mtti / agent_mtti:.1f}x")


def test_criterion_3_reflection_bound():
    """Adversarial always-REVISE reflector over 1,000 randomized incidents:
    every one terminates at exactly 5 cycles with the uncertainty tag."""
    rng = random.Random(100)
    services = [f"svc-{i}" for i in range(6)]
    engine = build_engine(
        rules=adversarial_revise_rules(),
        dedup=DedupPolicy(default_mode=DedupMode.INDEPENDENT),
        topology={},
    )
    base = engine.runtime.now_ms()
    events = []
    for i in range(300):
        events.append(
            LogEvent(base + rng.randint(0, 10**6), rng.choice(services),
                     rng.choice([LogLevel.INFO, LogLevel.WARN, LogLevel.ERROR]),
                     rng.choice(["heartbeat", "request slow", "boom"]),
                     correlation={"request_id": f"r{rng.randint(0, 50)}"} if rng.random() < 0.5 else {})
        )
    engine.telemetry.append_events(events)
    for i in range(1000):
        alert = make_alert(
            alert_id=f"AL-adv-{i}",
            service=rng.choice(services),
            alert_type=rng.choice(["mystery", "latency", "synthetic-noise"]),
            severity=rng.choice([Severity.WARN, Severity.ERROR]),
            fired_at=base + rng.randint(0, 10**6),
            correlation={"request_id": f"r{rng.randint(0, 50)}"} if rng.random() < 0.5 else {},
        )
        engine.handle_alert(alert)
    incidents = engine.incidents.all()
    assert len(incidents) == 1000
    assert all(r.state == IncidentState.CLOSED for r in incidents)
    cycles = {r.reflection_cycles_used for r in incidents}
    assert cycles == {5}
    assert all(r.summary.uncertainty_tag == UncertaintyTag.LOW_CONFIDENCE_TIMEOUT for r in incidents)
    assert not any(r.reflection_cycles_used > 5 for r in incidents)
    _pass(3, "1000/1000 adversarial incidents terminated at exactly 5 cycles, all tagged")


def test_criterion_4_approval_safety(case_replay, generic_replay, generic_auto_approve, throttled_pair):
    """Every executed HIGH-risk call has exactly one prior APPROVED record;
    with auto-approval disabled, zero HIGH-risk executions occur."""
    all_runs = {
        "case_study(policy=none)": case_replay,
        "generic(policy=none)": generic_replay,
        "generic(auto_approve)": generic_auto_approve,
        "throttle(throttled)": throttled_pair[0],
        "throttle(unlimited)": throttled_pair[1],
    }
    for name, run in all_runs.items():
        assert run.audit_violations == [], f"{name}: {run.audit_violations}"
    approved_execs = [
        e for e in generic_auto_approve.engine.actions.audit_log
        if e["event"] == "tool_executed" and e["risk"] == "HIGH"
    ]
    assert len(approved_execs) == 3  # one restart per dependency-failure incident
    for run_name in ("case_study(policy=none)", "generic(policy=none)"):
        run = all_runs[run_name]
        high_execs = [
            e for e in run.engine.actions.audit_log
            if e["event"] == "tool_executed" and e["risk"] == "HIGH"
        ]
        assert high_execs == [], f"{run_name} executed HIGH-risk tools without approval flow"
    _pass(4, f"zero violations across {len(all_runs)} replay runs; "
             f"{len(approved_execs)} approved HIGH-risk executions, none unapproved")


def test_criterion_5_throttling_behavior(throttled_pair):
    """AR(throttled) < AR(unlimited); ELA unchanged; anomaly reports bitwise equal."""
    throttled, unlimited = throttled_pair
    assert throttled.agent_report.ar < unlimited.agent_report.ar
    assert throttled.agent_report.ela == unlimited.agent_report.ela
    reports_t = {r.incident_id: json.dumps(r.anomaly_report, sort_keys=True) for r in throttled.incidents}
    reports_u = {r.incident_id: json.dumps(r.anomaly_report, sort_keys=True) for r in unlimited.incidents}
    assert reports_t == reports_u
    _pass(5, f"AR {format_percent(throttled.agent_report.ar)} < {format_percent(unlimited.agent_report.ar)}, "
             f"ELA equal at {format_percent(throttled.agent_report.ela)}, "
             f"{len(reports_t)} anomaly reports bitwise-identical")


def test_criterion_6_metric_oracles():
    """compute_mtti/ela/eer/ar match an independent brute-force recomputation
    on 200 randomized incident sets, to 1e-9; 66/72 renders as 91.6%."""
    from opstriage.gateway import Alert, IncidentRecord
    from opstriage.planner import DiagnosticSummary, Hypothesis, HypothesisKind

    rng = random.Random(777)

    def rand_incident(k):
        fired = 10**12 + rng.randint(0, 10**8)
        alert = Alert(alert_id=f"a{k}", service="s", alert_type="t",
                      severity=Severity.WARN, fired_at=fired)
        rec = IncidentRecord(incident_id=f"i{k}", alerts=[alert])
        rec.enter_state(IncidentState.RECEIVED, fired)
        rec.triage_steps = [
            {"label": f"st{j}", "minutes": rng.uniform(0.1, 5), "automated": rng.random() < 0.5}
            for j in range(rng.randint(1, 6))
        ]
        if rng.random() < 0.85:
            produced = fired + int(rng.uniform(0.1, 12) * 60000)
            rec.summary = DiagnosticSummary(
                incident_id=rec.incident_id, headline="h",
                fault_component=rng.choice(["a", "b", "c"]),
                hypothesis=Hypothesis("s", "a", HypothesisKind.DATA_CONTENT, 0.5),
                findings={}, recommended_action="x", recommended_tool=None,
                produced_at=produced)
            rec.enter_state(IncidentState.SUMMARIZED, produced)
        return rec

    checked = 0
    for _ in range(200):
        cohort = [rand_incident(k) for k in range(rng.randint(1, 30))]
        truth = {r.incident_id: rng.choice(["a", "b", "c"]) for r in cohort}
        # independent brute-force recomputation from raw record fields
        deltas = [(r.summary.produced_at - r.alerts[0].fired_at) / 60000.0
                  for r in cohort if r.summary is not None]
        matches = sum(1 for r in cohort if r.summary is not None and
                      r.summary.fault_component.strip().casefold() == truth[r.incident_id].strip().casefold())
        ratios = [sum(1 for s in r.triage_steps if s["automated"]) / len(r.triage_steps) for r in cohort]
        hits = sum(1 for r in cohort if r.summary is not None and
                   (r.summary.produced_at - r.alerts[0].fired_at) <= 300000)
        if deltas:
            assert abs(compute_mtti(cohort) - sum(deltas) / len(deltas)) < 1e-9
        assert abs(compute_ela(cohort, truth) - matches / len(cohort)) < 1e-9
        assert abs(compute_eer(cohort) - sum(ratios) / len(ratios)) < 1e-9
        assert abs(compute_ar(cohort) - hits / len(cohort)) < 1e-9
        checked += 1
    assert checked == 200
    assert format_percent(66 / 72) == "91.6%"
    _pass(6, "200 randomized cohorts match brute force to 1e-9; 66/72 renders 91.6%")


def test_criterion_7_telemetry_correctness():
    """query() and trace_correlation() equal the linear-scan oracle on 100
    randomized stores of up to 10k events; chains are time-ordered."""
    rng = random.Random(4242)
    services = ["a", "b", "c", "d"]
    kinds = ["session_id", "request_id"]
    total_events = 0
    for store_idx in range(100):
        n = rng.randint(0, 2000) if store_idx % 20 else rng.randint(8000, 10000)
        events = []
        for _ in range(n):
            corr = {}
            if rng.random() < 0.4:
                corr[rng.choice(kinds)] = f"v{rng.randint(0, 8)}"
            events.append(LogEvent(
                ts=rng.randint(0, 50_000), service=rng.choice(services),
                level=rng.choice(list(LogLevel)),
                message=rng.choice(["alpha", "beta gamma", "content validation failed", "delta"]),
                correlation=corr))
        store = TelemetryStore(InlineRuntime())
        store.append_events(events)
        total_events += n
        snapshot = store.snapshot()
        for _ in range(3):
            start = rng.randint(0, 40_000)
            q = LogQuery(
                start_ms=start, end_ms=start + rng.randint(0, 20_000),
                services=set(rng.sample(services, rng.randint(1, 4))) if rng.random() < 0.5 else None,
                min_level=rng.choice(list(LogLevel)) if rng.random() < 0.5 else None,
                text_match=rng.choice(["beta", "validation"]) if rng.random() < 0.3 else None,
                limit=rng.randint(1, 100))
            expected = sorted((e for e in snapshot if q.matches(e)),
                              key=lambda e: (e.ts, e.event_id))[: q.limit]
            assert store.query(q) == expected
        kind, value = rng.choice(kinds), f"v{rng.randint(0, 8)}"
        chain = store.trace_correlation(kind, value, 0, 60_000)
        expected_events = sorted(
            (e for e in snapshot if e.correlation.get(kind) == value),
            key=lambda e: (e.ts, e.event_id))
        assert chain.events == expected_events
        expected_services = []
        for e in expected_events:
            if e.service not in expected_services:
                expected_services.append(e.service)
        assert chain.services == expected_services
        tss = [e.ts for e in chain.events]
        assert tss == sorted(tss)
    _pass(7, f"100 randomized stores ({total_events} events) match the linear-scan oracle exactly")


def test_criterion_8_determinism_and_concurrency(case_replay, case_replay_repeat, case_replay_sequential):
    """Identical (scenario, seed, rules) give byte-identical incident files;
    interleaved-parallel summaries equal forced-sequential summaries."""
    lines_a = case_replay.incident_lines()
    lines_b = case_replay_repeat.incident_lines()
    assert "\n".join(lines_a).encode() == "\n".join(lines_b).encode()
    seq_by_id = {r.incident_id: r for r in case_replay_sequential.incidents}
    for rec in case_replay.incidents:
        seq = seq_by_id[rec.incident_id]
        assert rec.summary.to_json() == seq.summary.to_json()
    assert all(
        is_legal_transition(IncidentState(a), IncidentState(b))
        for rec in case_replay.incidents
        for (a, _), (b, _) in zip(rec.phase_timeline, rec.phase_timeline[1:])
    )
    _pass(8, f"two runs byte-identical ({len(lines_a)} records); parallel == sequential "
             f"summaries for all {len(case_replay.incidents)} incidents")


def test_criterion_9_retrieval_routing(generic_replay):
    """CODE_REGRESSION incidents perform exactly one deployment retrieval;
    UNKNOWN incidents perform none."""
    regression = [r for r in generic_replay.incidents if r.alert_type == "error-rate-spike"]
    unknown = [r for r in generic_replay.incidents if r.alert_type == "synthetic-noise"]
    assert len(regression) == 3 and len(unknown) == 2

    def deployment_steps(rec):
        return [s for s in rec.plan["steps"]
                if s["action"] == "QUERY_KNOWLEDGE" and s["knowledge_kind"] == "DEPLOYMENT"
                and s["status"] != "SKIPPED"]

    for rec in regression:
        assert rec.summary.hypothesis.kind.value == "CODE_REGRESSION"
        assert len(deployment_steps(rec)) == 1
    for rec in unknown:
        assert rec.summary.hypothesis.kind.value == "UNKNOWN"
        assert deployment_steps(rec) == []
        assert not any(s["action"] == "QUERY_KNOWLEDGE" for s in rec.plan["steps"])
    _pass(9, "3/3 code-regression incidents made exactly one deployment retrieval; "
             "2/2 unknown incidents made none")


def test_criterion_10_summary_structure(case_replay):
    """Every content-validation summary carries fragment/variant/locale/
    error_type/line_number, each value grounded in evidence; unthrottled AR >= 0.90."""
    from opstriage.planner import check_grounding

    required = {"fragment", "variant", "locale", "error_type", "line_number"}
    for rec in case_replay.incidents:
        findings = rec.summary.findings
        assert required <= set(findings), rec.incident_id
        assert all(findings[k] for k in required)
        # re-run the grounding check mechanically against the workflow's evidence
        wf = case_replay.engine.workflow_for(rec)
        check_grounding(findings, rec.summary.hypothesis.evidence_refs, wf.evidence)
    assert case_replay.agent_report.ar >= 0.90
    _pass(10, f"72/72 summaries carry all findings fields, grounded; "
              f"AR {format_percent(case_replay.agent_report.ar)}")
