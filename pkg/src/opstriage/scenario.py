"""Synthetic incident corpus generation with ground truth and cost models.

A scenario file describes a service topology, a fault list, and replay
policy; (scenario, seed) fully determines the generated alert and log event
streams. Three fault templates ship:

* ``content_validation`` — a malformed CMS fragment; the monitor fires every
  60 s from injection until correction, and each firing must be triaged
  independently.
* ``code_regression``      — an error burst following a deployment, with the
  culprit commit in the deployment metadata index.
* ``dependency_failure``   — a downstream service failing under an upstream
  alert.
* ``noise``                — an alert with no supporting telemetry (degraded
  path).

Cost models capture triage effort as (label, duration range, automated) steps
sampled uniformly per incident from the scenario seed; automated-step
durations are charged to the simulated clock phase by phase.
"""

from __future__ import annotations

import json
import os
import random
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .actions import ActionRuntime, Risk, ToolSpec
from .errors import InvalidSpec
from .gateway import Alert, DedupPolicy, Severity
from .knowledge import DocKind, KnowledgeDoc
from .reasoner import RuleEntry
from .telemetry import LogEvent, LogLevel

ALERT_CADENCE_MS = 60_000
DEFAULT_START_MS = 1736121600000  # 2025-01-06T00:00:00Z

CONTENT_VALIDATION_ALERT_TYPE = "content-validation"


# --------------------------------------------------------------------------
# Cost models
# --------------------------------------------------------------------------

@dataclass
class CostStep:
    label: str
    lo_minutes: float
    hi_minutes: float
    automated: bool

    def validate(self) -> None:
        if self.lo_minutes > self.hi_minutes:
            raise InvalidSpec(f"cost step {self.label!r}: lo > hi")


@dataclass
class CostModel:
    steps: List[CostStep]

    def validate(self) -> None:
        if not self.steps:
            raise InvalidSpec("cost model needs at least one step")
        for s in self.steps:
            s.validate()

    def sample(self, rng: random.Random) -> List[dict]:
        """Uniform draw per step; returns [{label, minutes, automated}]."""
        return [
            {
                "label": s.label,
                "minutes": rng.uniform(s.lo_minutes, s.hi_minutes),
                "automated": s.automated,
            }
            for s in self.steps
        ]

    @classmethod
    def from_json(cls, obj: dict) -> "CostModel":
        model = cls(
            steps=[
                CostStep(
                    label=s["label"],
                    lo_minutes=float(s["lo_minutes"]),
                    hi_minutes=float(s["hi_minutes"]),
                    automated=bool(s["automated"]),
                )
                for s in obj["steps"]
            ]
        )
        model.validate()
        return model


def agent_cost_model() -> CostModel:
    """Agent-assisted triage: three automated stages plus the residual manual
    content fix. Automated ranges are in seconds-scale minutes."""
    return CostModel(
        steps=[
            CostStep("contextual log retrieval", 30 / 60, 45 / 60, automated=True),
            CostStep("variant and locale inference", 20 / 60, 30 / 60, automated=True),
            CostStep("content validation script", 20 / 60, 30 / 60, automated=True),
            CostStep("modify and re-publish content", 1.0, 2.0, automated=False),
        ]
    )


def manual_cost_model() -> CostModel:
    """Fully manual triage of the same incident class."""
    return CostModel(
        steps=[
            CostStep("inspect logs to locate the affected content fragment", 5.0, 8.0, automated=False),
            CostStep("identify the specific variant and locale", 1.0, 2.0, automated=False),
            CostStep("execute the content validation script", 2.0, 3.0, automated=False),
            CostStep("apply corrections and re-publish", 1.0, 2.0, automated=False),
        ]
    )


def manual_cost(model: CostModel, rng: random.Random) -> Tuple[float, List[dict]]:
    steps = model.sample(rng)
    return sum(s["minutes"] for s in steps), steps


# --------------------------------------------------------------------------
# Scenario specification
# --------------------------------------------------------------------------

@dataclass
class FaultSpec:
    template: str
    service: str
    injected_at_s: Optional[float] = None
    # content_validation
    source_service: Optional[str] = None
    fragment: Optional[str] = None
    variant: Optional[str] = None
    locale: Optional[str] = None
    error_line: Optional[int] = None
    error_type: Optional[str] = None
    corrected_after_s: float = 360.0
    # code_regression
    commit_id: Optional[str] = None
    change_summary: Optional[str] = None
    deploy_lead_s: float = 600.0
    # dependency_failure
    dependency: Optional[str] = None

    def validate(self) -> None:
        if self.template not in ("content_validation", "code_regression", "dependency_failure", "noise"):
            raise InvalidSpec(f"unknown fault template {self.template!r}")
        if self.template == "content_validation":
            missing = [
                k
                for k in ("fragment", "variant", "locale", "error_line", "error_type")
                if getattr(self, k) is None
            ]
            if missing:
                raise InvalidSpec(f"content_validation fault missing {missing}")
            if self.corrected_after_s <= 0:
                raise InvalidSpec("corrected_after_s must be positive")
        if self.template == "code_regression" and not self.commit_id:
            raise InvalidSpec("code_regression fault needs commit_id")
        if self.template == "dependency_failure" and not self.dependency:
            raise InvalidSpec("dependency_failure fault needs dependency")

    @classmethod
    def from_json(cls, obj: dict) -> "FaultSpec":
        allowed = set(cls.__dataclass_fields__)  # type: ignore[attr-defined]
        unknown = set(obj) - allowed
        if unknown:
            raise InvalidSpec(f"unknown fault fields: {sorted(unknown)}")
        fault = cls(**obj)
        fault.validate()
        return fault


@dataclass
class ScenarioSpec:
    scenario_id: str
    duration_s: float
    services: List[dict]  # [{"name":..., "depends_on":[...]}]
    faults: List[FaultSpec]
    seed: int = 0
    start_at_ms: int = DEFAULT_START_MS
    dedup: dict = field(default_factory=dict)
    rate_limit: Optional[dict] = None
    workers: int = 8
    approval_policy: str = "none"
    agent_model: Optional[CostModel] = None
    manual_model: Optional[CostModel] = None
    reasoner_rules: Optional[object] = None  # path string or inline list
    base_dir: str = "."

    def topology(self) -> Dict[str, List[str]]:
        return {s["name"]: list(s.get("depends_on", [])) for s in self.services}

    def dedup_policy(self) -> DedupPolicy:
        return DedupPolicy.from_json(self.dedup)

    def agent_cost(self) -> CostModel:
        return self.agent_model or agent_cost_model()

    def manual_cost_model(self) -> CostModel:
        return self.manual_model or manual_cost_model()

    def validate(self) -> None:
        if self.duration_s <= 0:
            raise InvalidSpec("duration_s must be positive")
        if not self.services:
            raise InvalidSpec("scenario needs at least one service")
        names = {s["name"] for s in self.services}
        for svc in self.services:
            for dep in svc.get("depends_on", []):
                if dep not in names:
                    raise InvalidSpec(f"service {svc['name']} depends on unknown {dep!r}")
        if not self.faults:
            raise InvalidSpec("scenario needs at least one fault")
        for f in self.faults:
            f.validate()

    @classmethod
    def from_json(cls, obj: dict, base_dir: str = ".") -> "ScenarioSpec":
        try:
            spec = cls(
                scenario_id=obj["scenario_id"],
                duration_s=float(obj["duration_s"]),
                services=list(obj["services"]),
                faults=[FaultSpec.from_json(f) for f in obj["faults"]],
                seed=int(obj.get("seed", 0)),
                start_at_ms=int(obj.get("start_at_ms", DEFAULT_START_MS)),
                dedup=dict(obj.get("dedup", {})),
                rate_limit=obj.get("rate_limit"),
                workers=int(obj.get("workers", 8)),
                approval_policy=str(obj.get("approval_policy", "none")),
                agent_model=CostModel.from_json(obj["agent_model"]) if obj.get("agent_model") else None,
                manual_model=CostModel.from_json(obj["manual_model"]) if obj.get("manual_model") else None,
                reasoner_rules=obj.get("reasoner_rules"),
                base_dir=base_dir,
            )
        except KeyError as exc:
            raise InvalidSpec(f"scenario missing required field {exc}") from exc
        spec.validate()
        return spec

    @classmethod
    def load(cls, path: str) -> "ScenarioSpec":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                obj = json.load(fh)
        except OSError as exc:
            raise InvalidSpec(f"cannot read scenario {path}: {exc}") from exc
        except ValueError as exc:
            raise InvalidSpec(f"scenario {path} is not valid JSON: {exc}") from exc
        return cls.from_json(obj, base_dir=os.path.dirname(os.path.abspath(path)))

    def load_rules(self) -> List[RuleEntry]:
        """Scenario rule table plus the built-in fallback rules."""
        entries: List[RuleEntry] = []
        ref = self.reasoner_rules
        if isinstance(ref, str):
            path = ref if os.path.isabs(ref) else os.path.join(self.base_dir, ref)
            try:
                with open(path, "r", encoding="utf-8") as fh:
                    data = json.load(fh)
            except (OSError, ValueError) as exc:
                raise InvalidSpec(f"cannot load rule table {path}: {exc}") from exc
            raw = data["rules"] if isinstance(data, dict) else data
            entries = [RuleEntry.from_json(e) for e in raw]
        elif isinstance(ref, list):
            entries = [RuleEntry.from_json(e) for e in ref]
        elif isinstance(ref, dict):
            entries = [RuleEntry.from_json(e) for e in ref.get("rules", [])]
        return entries + fallback_rules()


# --------------------------------------------------------------------------
# Generation
# --------------------------------------------------------------------------

@dataclass
class Generated:
    alerts: List[Alert]                      # fired_at ascending
    events: List[LogEvent]                   # ts ascending
    kb_docs: List[KnowledgeDoc]
    ground_truth: Dict[str, str]             # alert_id -> fault_component
    fault_of_alert: Dict[str, int]           # alert_id -> fault index
    fault_windows: List[Tuple[int, int]]     # per fault: (injected_ms, corrected_ms)


def _injection_times(spec: ScenarioSpec, rng: random.Random) -> List[int]:
    """Explicit times pass through; unset ones are stratified across the
    scenario window so fault query windows never overlap across faults."""
    n = len(spec.faults)
    stratum = spec.duration_s / n
    times: List[int] = []
    for i, fault in enumerate(spec.faults):
        if fault.injected_at_s is not None:
            offset_s = float(fault.injected_at_s)
        else:
            offset_s = i * stratum + rng.uniform(0, max(stratum * 0.8 - fault.corrected_after_s, 0.0))
        times.append(spec.start_at_ms + int(round(offset_s * 1000)))
    return times


def generate(spec: ScenarioSpec, seed: int) -> Generated:
    spec.validate()
    rng = random.Random(f"{seed}:{spec.scenario_id}:inject")
    injected = _injection_times(spec, rng)
    alerts: List[Alert] = []
    events: List[LogEvent] = []
    docs: List[KnowledgeDoc] = []
    truth: Dict[str, str] = {}
    fault_of: Dict[str, int] = {}
    windows: List[Tuple[int, int]] = []

    docs.extend(_base_kb_docs(spec))
    for idx, fault in enumerate(spec.faults):
        frng = random.Random(f"{seed}:{spec.scenario_id}:fault:{idx}")
        t0 = injected[idx]
        if fault.template == "content_validation":
            corrected = t0 + int(round(fault.corrected_after_s * 1000))
            windows.append((t0, corrected))
            k = 0
            while t0 + k * ALERT_CADENCE_MS < corrected:
                fired = t0 + k * ALERT_CADENCE_MS
                sess, req = f"sess-{idx:02d}-{k:03d}", f"req-{idx:02d}-{k:03d}"
                alert = Alert(
                    alert_id=f"AL-{idx:02d}-{k:03d}",
                    service=fault.service,
                    alert_type=CONTENT_VALIDATION_ALERT_TYPE,
                    severity=Severity.WARN,
                    fired_at=fired,
                    monitor="content-validation-monitor",
                    correlation={"session_id": sess, "request_id": req},
                    payload={"source_service": fault.source_service or fault.service},
                )
                alerts.append(alert)
                truth[alert.alert_id] = fault.fragment or ""
                fault_of[alert.alert_id] = idx
                src = fault.source_service or fault.service
                events += [
                    LogEvent(
                        ts=fired - 2000,
                        service=src,
                        level=LogLevel.ERROR,
                        message=f"content validation failed for fragment {fault.fragment}",
                        correlation={"session_id": sess, "request_id": req},
                        fields={
                            "fragment": fault.fragment or "",
                            "variant": fault.variant or "",
                            "locale": fault.locale or "",
                        },
                    ),
                    LogEvent(
                        ts=fired - 1000,
                        service=fault.service,
                        level=LogLevel.WARN,
                        message=f"content validation error on render path for fragment {fault.fragment}",
                        correlation={"session_id": sess, "request_id": req},
                        fields={"fragment": fault.fragment or ""},
                    ),
                    LogEvent(
                        ts=fired - 500,
                        service="cdn" if "cdn" in spec.topology() else fault.service,
                        level=LogLevel.INFO,
                        message=f"falling back to cached content for fragment {fault.fragment}",
                        correlation={"session_id": sess},
                        fields={"fragment": fault.fragment or ""},
                    ),
                ]
                k += 1
        elif fault.template == "code_regression":
            windows.append((t0, t0))
            req = f"req-cr-{idx:02d}"
            alert = Alert(
                alert_id=f"AL-{idx:02d}-000",
                service=fault.service,
                alert_type="error-rate-spike",
                severity=Severity.ERROR,
                fired_at=t0,
                monitor="error-rate-monitor",
                correlation={"request_id": req},
                payload={},
            )
            alerts.append(alert)
            truth[alert.alert_id] = fault.service
            fault_of[alert.alert_id] = idx
            for j in range(5):
                events.append(
                    LogEvent(
                        ts=t0 - 9000 + j * 2000,
                        service=fault.service,
                        level=LogLevel.ERROR,
                        message=f"unhandled exception after deployment {fault.commit_id}",
                        correlation={"request_id": req} if j < 3 else {},
                        fields={"commit": fault.commit_id or ""},
                    )
                )
            deployed = t0 - int(round(fault.deploy_lead_s * 1000))
            docs.append(
                KnowledgeDoc(
                    doc_id=f"deploy-{fault.service}-{fault.commit_id}",
                    kind=DocKind.DEPLOYMENT,
                    title=f"deployment {fault.commit_id} to {fault.service}",
                    body=f"commit {fault.commit_id} deployed to {fault.service}: {fault.change_summary or 'no summary'}",
                    service=fault.service,
                    meta={"commit_id": fault.commit_id or "", "deployed_at": str(deployed)},
                )
            )
            for j in range(2):  # routine earlier deployments for ranking contrast
                old_commit = f"{fault.commit_id}-prev{j}"
                docs.append(
                    KnowledgeDoc(
                        doc_id=f"deploy-{fault.service}-{old_commit}",
                        kind=DocKind.DEPLOYMENT,
                        title=f"deployment {old_commit} to {fault.service}",
                        body=f"commit {old_commit} deployed to {fault.service}: routine dependency bumps",
                        service=fault.service,
                        meta={
                            "commit_id": old_commit,
                            "deployed_at": str(deployed - (j + 1) * 86_400_000),
                        },
                    )
                )
        elif fault.template == "dependency_failure":
            windows.append((t0, t0))
            req = f"req-df-{idx:02d}"
            alert = Alert(
                alert_id=f"AL-{idx:02d}-000",
                service=fault.service,
                alert_type="dependency-timeout",
                severity=Severity.ERROR,
                fired_at=t0,
                monitor="dependency-monitor",
                correlation={"request_id": req},
                payload={},
            )
            alerts.append(alert)
            truth[alert.alert_id] = fault.dependency or ""
            fault_of[alert.alert_id] = idx
            for j in range(3):
                events.append(
                    LogEvent(
                        ts=t0 - 8000 + j * 2000,
                        service=fault.dependency or "unknown",
                        level=LogLevel.ERROR,
                        message="connection pool exhausted",
                        correlation={"request_id": req} if j == 0 else {},
                        fields={"upstream": fault.service},
                    )
                )
            events.append(
                LogEvent(
                    ts=t0 - 1500,
                    service=fault.service,
                    level=LogLevel.WARN,
                    message=f"timeout calling {fault.dependency}",
                    correlation={"request_id": req},
                    fields={"dependency": fault.dependency or ""},
                )
            )
        elif fault.template == "noise":
            windows.append((t0, t0))
            alert = Alert(
                alert_id=f"AL-{idx:02d}-000",
                service=fault.service,
                alert_type="synthetic-noise",
                severity=Severity.INFO,
                fired_at=t0,
                monitor="synthetic-monitor",
                correlation={},
                payload={},
            )
            alerts.append(alert)
            truth[alert.alert_id] = "indeterminate"
            fault_of[alert.alert_id] = idx
        # Low-volume background chatter near each fault window.
        for _ in range(3):
            ts = injected[idx] - frng.randint(60_000, 600_000)
            svc = frng.choice([s["name"] for s in spec.services])
            events.append(
                LogEvent(
                    ts=ts,
                    service=svc,
                    level=LogLevel.INFO,
                    message="heartbeat ok",
                    fields={"component": "health"},
                )
            )

    alerts.sort(key=lambda a: (a.fired_at, a.alert_id))
    events.sort(key=lambda e: (e.ts, e.service, e.message))
    return Generated(
        alerts=alerts,
        events=events,
        kb_docs=docs,
        ground_truth=truth,
        fault_of_alert=fault_of,
        fault_windows=windows,
    )


def _base_kb_docs(spec: ScenarioSpec) -> List[KnowledgeDoc]:
    service_list = ", ".join(s["name"] for s in spec.services)
    return [
        KnowledgeDoc(
            doc_id="rb-content-validation",
            kind=DocKind.RUNBOOK,
            title="Content Validation Error Response",
            body=(
                "When the content validation monitor fires: locate the affected "
                "fragment in the logs, run validate_content for the fragment, "
                "variant and locale, correct the source, then republish_content."
            ),
        ),
        KnowledgeDoc(
            doc_id="rb-deployment-rollback",
            kind=DocKind.RUNBOOK,
            title="Deployment Rollback",
            body=(
                "For error bursts that begin after a deployment: identify the most "
                "recent commit from deployment metadata, roll it back, and restart "
                "the affected job."
            ),
        ),
        KnowledgeDoc(
            doc_id="rb-dependency-failure",
            kind=DocKind.RUNBOOK,
            title="Dependency Failure Playbook",
            body=(
                "When a downstream dependency exhausts its connection pool: drain "
                "traffic, restart_job on the dependency, and clear_cache upstream "
                "if stale reads persist."
            ),
        ),
        KnowledgeDoc(
            doc_id="wiki-topology",
            kind=DocKind.WIKI,
            title="Service Topology Overview",
            body=f"Services in this environment: {service_list}. Dependencies flow downstream.",
        ),
    ]


# --------------------------------------------------------------------------
# Scenario tools
# --------------------------------------------------------------------------

class ScenarioState:
    """Mutable fault state shared by the scenario tools and the replay feeder."""

    def __init__(self, spec: ScenarioSpec, windows: List[Tuple[int, int]]):
        self.spec = spec
        self.windows = windows
        self.republished_at: Dict[int, int] = {}  # fault idx -> execution time ms

    def find_content_fault(self, fragment: str, variant: str, locale: str) -> Optional[int]:
        for idx, f in enumerate(self.spec.faults):
            if (
                f.template == "content_validation"
                and f.fragment == fragment
                and f.variant == variant
                and f.locale == locale
            ):
                return idx
        return None

    def republish(self, idx: int, now_ms: int) -> None:
        self.republished_at.setdefault(idx, now_ms)

    def alert_silenced(self, fault_idx: int, fired_at: int) -> bool:
        cut = self.republished_at.get(fault_idx)
        return cut is not None and fired_at >= cut


def register_scenario_tools(actions: ActionRuntime, state: ScenarioState) -> List[str]:
    """validate_content / clear_cache (LOW); restart_job / republish_content
    (HIGH). Executors are simulated against the scenario's fault table."""

    fragment_params = {
        "type": "object",
        "required": ["fragment", "variant", "locale"],
        "properties": {
            "fragment": {"type": "string"},
            "variant": {"type": "string"},
            "locale": {"type": "string"},
        },
    }

    def validate_content(args: dict, now_ms: int) -> dict:
        idx = state.find_content_fault(args["fragment"], args["variant"], args["locale"])
        if idx is None or idx in state.republished_at:
            return {"result": "valid"}
        fault = state.spec.faults[idx]
        return {
            "result": "invalid",
            "line_number": fault.error_line,
            "error_description": fault.error_type,
        }

    def republish_content(args: dict, now_ms: int) -> dict:
        idx = state.find_content_fault(args["fragment"], args["variant"], args["locale"])
        if idx is None:
            return {"result": "republished", "note": "fragment not tracked by any fault"}
        state.republish(idx, now_ms)
        return {"result": "republished", "fragment": args["fragment"]}

    def restart_job(args: dict, now_ms: int) -> dict:
        return {"result": "restarted", "service": args["service"], "job": args.get("job", "default")}

    def clear_cache(args: dict, now_ms: int) -> dict:
        return {"result": "cleared", "service": args["service"]}

    specs = [
        ToolSpec(
            name="validate_content",
            description="run the content validation script for a fragment/variant/locale",
            risk=Risk.LOW,
            param_schema=fragment_params,
            executor=validate_content,
        ),
        ToolSpec(
            name="clear_cache",
            description="clear the edge cache for a service",
            risk=Risk.LOW,
            param_schema={
                "type": "object",
                "required": ["service"],
                "properties": {"service": {"type": "string"}},
            },
            executor=clear_cache,
        ),
        ToolSpec(
            name="restart_job",
            description="restart a background job on a service",
            risk=Risk.HIGH,
            param_schema={
                "type": "object",
                "required": ["service"],
                "properties": {"service": {"type": "string"}, "job": {"type": "string"}},
            },
            executor=restart_job,
        ),
        ToolSpec(
            name="republish_content",
            description="republish a corrected content fragment",
            risk=Risk.HIGH,
            param_schema=fragment_params,
            executor=republish_content,
        ),
    ]
    for spec in specs:
        actions.register_tool(spec)
    return [s.name for s in specs]


# --------------------------------------------------------------------------
# Built-in fallback rules (degraded / evidence-free paths)
# --------------------------------------------------------------------------

def fallback_rules() -> List[RuleEntry]:
    raw = [
        {
            "agent_role": "PLANNER",
            "schema_id": "gaps.v1",
            "priority": -100,
            "match": [{"block": "facts", "contains": '"has_evidence": false'}],
            "response": {
                "gaps": [
                    {
                        "gap_id": "no-evidence",
                        "description": "no error-level evidence in the alert window",
                        "resolvable_by": "LOGS",
                    }
                ]
            },
        },
        {
            "agent_role": "PLANNER",
            "schema_id": "gaps.v1",
            "priority": -110,
            "match": [],
            "response": {
                "gaps": [
                    {
                        "gap_id": "causal-review",
                        "description": "review collected anomalies for a causal event",
                        "resolvable_by": "LOGS",
                    }
                ]
            },
        },
        {
            "agent_role": "PLANNER",
            "schema_id": "plan.v1",
            "priority": -100,
            "match": [],
            "response": {
                "hypothesis": {
                    "statement": "insufficient evidence to localize the fault",
                    "fault_component": "",
                    "kind": "UNKNOWN",
                    "confidence": 0.2,
                },
                "steps": [],
            },
        },
        {
            "agent_role": "PLANNER",
            "schema_id": "summary.v1",
            "priority": -100,
            "match": [],
            "response": {
                "headline": "No grounded diagnosis for {alert:alert_type} on {alert:service}",
                "fault_component": "",
                "hypothesis": {
                    "statement": "insufficient evidence to localize the fault",
                    "fault_component": "",
                    "kind": "UNKNOWN",
                    "confidence": 0.2,
                },
                "findings": {},
                "recommended_action": {"text": "escalate to the on-call engineer for manual investigation"},
            },
        },
        {
            "agent_role": "REFLECTOR",
            "schema_id": "verdict.v1",
            "priority": -100,
            "match": [],
            "response": {
                "completeness": {"pass": True, "rationale": "mechanical checks stand"},
                "causality": {"pass": True, "rationale": "mechanical checks stand"},
                "actionability": {"pass": True, "rationale": "mechanical checks stand"},
                "overall": "ACCEPT",
                "revision_directives": [],
            },
        },
    ]
    return [RuleEntry.from_json(r) for r in raw]


def adversarial_revise_rules() -> List[RuleEntry]:
    """Reflector that never accepts; used to exercise the cycle bound."""
    raw = [
        {
            "agent_role": "REFLECTOR",
            "schema_id": "verdict.v1",
            "priority": 1000,
            "match": [],
            "response": {
                "completeness": {"pass": False, "rationale": "adversarial: never satisfied"},
                "causality": {"pass": False, "rationale": "adversarial: never satisfied"},
                "actionability": {"pass": False, "rationale": "adversarial: never satisfied"},
                "overall": "REVISE",
                "revision_directives": ["collect more evidence"],
            },
        }
    ]
    return [RuleEntry.from_json(r) for r in raw]
