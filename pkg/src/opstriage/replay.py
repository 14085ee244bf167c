"""Deterministic scenario replay: feeds the generated corpus through the
triage engine on the simulated clock and reports cohort metrics.

The replay output is a pure function of (scenario, seed, rule table, config):
identical invocations produce byte-identical incident files.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from typing import Dict, List, Optional

from .actions import ActionRuntime, audit_approval_safety
from .gateway import Alert, AlertGateway, IncidentRecord, IncidentState, IncidentStore
from .knowledge import KnowledgeStore
from .metrics import MetricsReport, build_report
from .orchestrator import EngineConfig, RecordingSink, TriageEngine
from .planner import DiagnosticSummary, Hypothesis, HypothesisKind
from .reasoner import RuleEntry, ScriptedBackend
from .runtime import SimRuntime
from .scenario import (
    Generated,
    ScenarioSpec,
    ScenarioState,
    generate,
    register_scenario_tools,
)
from .telemetry import RateLimitConfig, TelemetryStore

# Sentinel: use whatever the scenario file specifies.
SCENARIO_RATE_LIMIT = object()

PHASE_ORDER = ["LOG_RETRIEVAL", "PLANNING", "EXECUTING"]


@dataclass
class ReplayResult:
    spec: ScenarioSpec
    seed: int
    generated: Generated
    incidents: List[IncidentRecord]
    manual_incidents: List[IncidentRecord]
    ground_truth: Dict[str, str]  # incident_id -> fault component
    agent_report: MetricsReport
    manual_report: MetricsReport
    engine: TriageEngine
    sink: RecordingSink
    audit_violations: List[str]
    ingested_alerts: int = 0
    notes: List[str] = field(default_factory=list)

    def incident_lines(self) -> List[str]:
        return [
            json.dumps(rec.to_json(), sort_keys=True, separators=(",", ":"))
            for rec in sorted(self.incidents, key=lambda r: r.incident_id)
        ]

    def write_incidents(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for line in self.incident_lines():
                fh.write(line + "\n")


def _phase_charges(rec: IncidentRecord) -> Dict[str, float]:
    """Automated cost-model steps map, in order, onto the retrieval, planning
    and execution phases; extras accumulate on execution. Manual steps are
    the engineer's residual work and are never charged before the summary."""
    charges: Dict[str, float] = {}
    automated = [s for s in rec.triage_steps if s["automated"]]
    for i, step in enumerate(automated):
        phase = PHASE_ORDER[min(i, len(PHASE_ORDER) - 1)]
        charges[phase] = charges.get(phase, 0.0) + step["minutes"] * 60.0
    return charges


def run_replay(
    spec: ScenarioSpec,
    seed: int,
    rate_limit: object = SCENARIO_RATE_LIMIT,
    parallel_fetch: bool = True,
    approval_policy: Optional[str] = None,
    extra_rules: Optional[List[RuleEntry]] = None,
    out_path: Optional[str] = None,
) -> ReplayResult:
    spec.validate()
    gen = generate(spec, seed)
    runtime = SimRuntime(start_ms=spec.start_at_ms)

    if rate_limit is SCENARIO_RATE_LIMIT:
        rl_cfg = (
            RateLimitConfig(int(spec.rate_limit["capacity"]), float(spec.rate_limit["refill_per_s"]))
            if spec.rate_limit
            else None
        )
    else:
        rl_cfg = rate_limit  # None (unlimited) or an explicit RateLimitConfig

    telemetry = TelemetryStore(runtime, rate_limit=rl_cfg)
    knowledge = KnowledgeStore()
    for doc in gen.kb_docs:
        knowledge.index_doc(doc)
    incident_store = IncidentStore()
    gateway = AlertGateway(
        incident_store,
        policy=spec.dedup_policy(),
        id_rng=random.Random(f"{seed}:{spec.scenario_id}:gateway"),
    )
    actions = ActionRuntime(runtime)
    state = ScenarioState(spec, gen.fault_windows)
    register_scenario_tools(actions, state)
    backend = ScriptedBackend(spec.load_rules() + (extra_rules or []))

    agent_model = spec.agent_cost()

    def on_open(rec: IncidentRecord, alert: Alert) -> None:
        rec.verified_root_cause = gen.ground_truth.get(alert.alert_id)
        rng = random.Random(f"{seed}:{spec.scenario_id}:agent:{alert.alert_id}")
        rec.triage_steps = [
            {**s, "minutes": round(s["minutes"], 6)} for s in agent_model.sample(rng)
        ]

    sink = RecordingSink()
    config = EngineConfig(
        parallel_fetch=parallel_fetch,
        workers=spec.workers,
        approval_policy=approval_policy if approval_policy is not None else spec.approval_policy,
    )
    engine = TriageEngine(
        runtime=runtime,
        incident_store=incident_store,
        gateway=gateway,
        telemetry=telemetry,
        knowledge=knowledge,
        reasoner=backend,
        actions=actions,
        topology=spec.topology(),
        config=config,
        sink=sink,
        charge_provider=_phase_charges,
        on_incident_open=on_open,
    )

    ingested = {"n": 0}

    def event_feeder() -> None:
        for ev in gen.events:
            wait_s = (ev.ts - runtime.now_ms()) / 1000.0
            if wait_s > 0:
                runtime.sleep(wait_s)
            telemetry.append_events([ev])

    def alert_feeder() -> None:
        for alert in gen.alerts:
            wait_s = (alert.fired_at - runtime.now_ms()) / 1000.0
            if wait_s > 0:
                runtime.sleep(wait_s)
            fault_idx = gen.fault_of_alert.get(alert.alert_id)
            if fault_idx is not None and state.alert_silenced(fault_idx, alert.fired_at):
                continue  # corrected content: the monitor stopped firing
            ingested["n"] += 1
            engine.handle_alert(alert)

    runtime.spawn(event_feeder, name="event-feeder")
    runtime.spawn(alert_feeder, name="alert-feeder")
    runtime.run()

    incidents = sorted(incident_store.all(), key=lambda r: r.incident_id)
    ground_truth = {
        rec.incident_id: rec.verified_root_cause or "" for rec in incidents
    }
    agent_report = build_report("agent", incidents, ground_truth=ground_truth, with_eer=True)

    manual_incidents = build_manual_cohort(spec, seed, gen)
    manual_report = build_report("manual", manual_incidents, ground_truth=None, with_eer=False)

    result = ReplayResult(
        spec=spec,
        seed=seed,
        generated=gen,
        incidents=incidents,
        manual_incidents=manual_incidents,
        ground_truth=ground_truth,
        agent_report=agent_report,
        manual_report=manual_report,
        engine=engine,
        sink=sink,
        audit_violations=audit_approval_safety(actions),
        ingested_alerts=ingested["n"],
    )
    if out_path:
        result.write_incidents(out_path)
    return result


def build_manual_cohort(spec: ScenarioSpec, seed: int, gen: Generated) -> List[IncidentRecord]:
    """Cost-model-only simulation of manual triage over the same alert stream."""
    model = spec.manual_cost_model()
    incidents: List[IncidentRecord] = []
    for i, alert in enumerate(gen.alerts):
        rng = random.Random(f"{seed}:{spec.scenario_id}:manual:{alert.alert_id}")
        steps = model.sample(rng)
        total_minutes = sum(s["minutes"] for s in steps)
        rec = IncidentRecord(incident_id=f"MAN-{i + 1:06d}", alerts=[alert])
        rec.enter_state(IncidentState.RECEIVED, alert.fired_at)
        produced_at = alert.fired_at + int(round(total_minutes * 60000))
        rec.enter_state(IncidentState.SUMMARIZED, produced_at)
        rec.triage_steps = [{**s, "minutes": round(s["minutes"], 6)} for s in steps]
        rec.summary = DiagnosticSummary(
            incident_id=rec.incident_id,
            headline="manual triage (simulated baseline)",
            fault_component="",
            hypothesis=Hypothesis(
                statement="manual baseline: no recorded hypothesis",
                fault_component="",
                kind=HypothesisKind.UNKNOWN,
                confidence=0.0,
            ),
            findings={},
            recommended_action="manual remediation",
            recommended_tool=None,
            produced_at=produced_at,
        )
        incidents.append(rec)
    return incidents
