"""Small-footprint engine assembly for unit tests."""

from __future__ import annotations

import random
from typing import Dict, List, Optional, Sequence

from opstriage.actions import ActionRuntime
from opstriage.gateway import Alert, AlertGateway, DedupPolicy, IncidentStore, Severity
from opstriage.knowledge import KnowledgeDoc, KnowledgeStore
from opstriage.orchestrator import EngineConfig, RecordingSink, TriageEngine
from opstriage.reasoner import RuleEntry, ScriptedBackend
from opstriage.runtime import InlineRuntime, Runtime
from opstriage.scenario import ScenarioSpec, ScenarioState, fallback_rules, register_scenario_tools
from opstriage.telemetry import LogEvent, RateLimitConfig, TelemetryStore

T0 = 1736121600000  # matches the shipped scenarios' start epoch


def make_alert(
    alert_id: str = "AL-1",
    service: str = "checkout",
    alert_type: str = "content-validation",
    severity: Severity = Severity.WARN,
    fired_at: int = T0,
    correlation: Optional[Dict[str, str]] = None,
    payload: Optional[dict] = None,
) -> Alert:
    return Alert(
        alert_id=alert_id,
        service=service,
        alert_type=alert_type,
        severity=severity,
        fired_at=fired_at,
        monitor="test-monitor",
        correlation=correlation or {},
        payload=payload or {},
    )


def build_engine(
    runtime: Optional[Runtime] = None,
    rules: Optional[List[RuleEntry]] = None,
    events: Sequence[LogEvent] = (),
    docs: Sequence[KnowledgeDoc] = (),
    topology: Optional[Dict[str, List[str]]] = None,
    rate_limit: Optional[RateLimitConfig] = None,
    config: Optional[EngineConfig] = None,
    scenario: Optional[ScenarioSpec] = None,
    dedup: Optional[DedupPolicy] = None,
) -> TriageEngine:
    rt = runtime or InlineRuntime(start_ms=T0)
    telemetry = TelemetryStore(rt, rate_limit=rate_limit)
    if events:
        telemetry.append_events(list(events))
    knowledge = KnowledgeStore()
    for d in docs:
        knowledge.index_doc(d)
    store = IncidentStore()
    gateway = AlertGateway(store, policy=dedup or DedupPolicy(), id_rng=random.Random(1))
    actions = ActionRuntime(rt)
    if scenario is not None:
        register_scenario_tools(actions, ScenarioState(scenario, []))
    return TriageEngine(
        runtime=rt,
        incident_store=store,
        gateway=gateway,
        telemetry=telemetry,
        knowledge=knowledge,
        reasoner=ScriptedBackend((rules or []) + fallback_rules()),
        actions=actions,
        topology=topology or {},
        config=config or EngineConfig(),
        sink=RecordingSink(),
    )
