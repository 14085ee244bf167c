"""Planning and synthesis agent: information gaps, condition-guarded stepwise
plans, hypothesis-routed knowledge retrieval, and the grounded diagnostic
summary.

Plans from the reasoner are never trusted blind: every plan is validated for
unique step ids, a single terminal synthesis step, and conditions that only
reference earlier steps. Findings are grounded mechanically: each finding
value must appear verbatim in a referenced evidence body.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

from .errors import GroundingViolation, PlanInvalid
from .log_agent import AlertContext, AnomalyReport, report_facts
from .reasoner import AgentRole, ReasonerBackend, render_prompt

PLANNER_INSTRUCTIONS = (
    "You are the triage planner for a production incident. Identify what is "
    "unknown, plan the cheapest steps that settle it, and synthesize grounded "
    "findings with an actionable recommendation."
)


class GapSource(str, Enum):
    TOOL = "TOOL"
    RUNBOOK = "RUNBOOK"
    WIKI = "WIKI"
    DEPLOYMENT_METADATA = "DEPLOYMENT_METADATA"
    LOGS = "LOGS"


KNOWLEDGE_GAP_KINDS = {GapSource.RUNBOOK, GapSource.WIKI, GapSource.DEPLOYMENT_METADATA}


@dataclass
class InfoGap:
    gap_id: str
    description: str
    resolvable_by: GapSource

    def to_json(self) -> dict:
        return {"gap_id": self.gap_id, "description": self.description, "resolvable_by": self.resolvable_by.value}


class HypothesisKind(str, Enum):
    CODE_REGRESSION = "CODE_REGRESSION"
    CONFIG = "CONFIG"
    DEPENDENCY_FAILURE = "DEPENDENCY_FAILURE"
    DATA_CONTENT = "DATA_CONTENT"
    INFRA = "INFRA"
    UNKNOWN = "UNKNOWN"


@dataclass
class Hypothesis:
    statement: str
    fault_component: str
    kind: HypothesisKind
    confidence: float
    evidence_refs: List[Tuple[str, str]] = field(default_factory=list)  # (ref_type, ref_id)

    def validate(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise PlanInvalid(f"confidence {self.confidence} outside [0,1]")
        if self.kind != HypothesisKind.UNKNOWN and not self.fault_component:
            raise PlanInvalid("fault_component required unless hypothesis kind is UNKNOWN")

    def to_json(self) -> dict:
        return {
            "statement": self.statement,
            "fault_component": self.fault_component,
            "kind": self.kind.value,
            "confidence": self.confidence,
            "evidence_refs": [[t, str(i)] for t, i in self.evidence_refs],
        }

    @classmethod
    def from_body(cls, body: dict) -> "Hypothesis":
        h = cls(
            statement=body["statement"],
            fault_component=body["fault_component"],
            kind=HypothesisKind(body["kind"]),
            confidence=float(body["confidence"]),
        )
        h.validate()
        return h


class StepKind(str, Enum):
    INVOKE_TOOL = "INVOKE_TOOL"
    QUERY_KNOWLEDGE = "QUERY_KNOWLEDGE"
    QUERY_LOGS = "QUERY_LOGS"
    SYNTHESIZE = "SYNTHESIZE"


class StepStatus(str, Enum):
    PENDING = "PENDING"
    RUNNING = "RUNNING"
    DONE = "DONE"
    SKIPPED = "SKIPPED"
    FAILED = "FAILED"


@dataclass
class StepCondition:
    step_id: str
    kind: str  # succeeded | equals | contains
    field: Optional[str] = None
    value: Optional[str] = None

    def to_json(self) -> dict:
        out = {"step_id": self.step_id, "kind": self.kind}
        if self.field is not None:
            out["field"] = self.field
        if self.value is not None:
            out["value"] = self.value
        return out


@dataclass
class PlanStep:
    step_id: str
    goal: str
    action: StepKind
    tool: Optional[str] = None
    args: Dict[str, object] = field(default_factory=dict)
    knowledge_kind: Optional[str] = None
    query: Optional[str] = None
    log_query: Optional[dict] = None
    condition: Optional[StepCondition] = None
    status: StepStatus = StepStatus.PENDING
    outcome: Dict[str, object] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "step_id": self.step_id,
            "goal": self.goal,
            "action": self.action.value,
            "tool": self.tool,
            "args": self.args,
            "knowledge_kind": self.knowledge_kind,
            "query": self.query,
            "log_query": self.log_query,
            "condition": self.condition.to_json() if self.condition else None,
            "status": self.status.value,
            "outcome": self.outcome,
        }


@dataclass
class ActionPlan:
    incident_id: str
    steps: List[PlanStep]
    revision: int = 0

    def to_json(self) -> dict:
        return {
            "incident_id": self.incident_id,
            "revision": self.revision,
            "steps": [s.to_json() for s in self.steps],
        }

    def step(self, step_id: str) -> Optional[PlanStep]:
        for s in self.steps:
            if s.step_id == step_id:
                return s
        return None


def validate_plan(plan: ActionPlan) -> None:
    """Unique step ids, exactly one terminal SYNTHESIZE, conditions only on
    earlier steps. Applied to every plan, reasoner-produced ones included."""
    seen: set = set()
    synth_positions = [i for i, s in enumerate(plan.steps) if s.action == StepKind.SYNTHESIZE]
    if len(synth_positions) != 1 or synth_positions[0] != len(plan.steps) - 1:
        raise PlanInvalid("plan must end with exactly one SYNTHESIZE step")
    for i, step in enumerate(plan.steps):
        if step.step_id in seen:
            raise PlanInvalid(f"duplicate step id {step.step_id!r}")
        seen.add(step.step_id)
        if step.condition is not None:
            earlier = {s.step_id for s in plan.steps[:i]}
            if step.condition.step_id not in earlier:
                raise PlanInvalid(
                    f"step {step.step_id!r} condition references {step.condition.step_id!r} "
                    "which is not an earlier step"
                )


def eval_condition(cond: Optional[StepCondition], plan: ActionPlan) -> bool:
    if cond is None:
        return True
    dep = plan.step(cond.step_id)
    if dep is None or dep.status != StepStatus.DONE:
        return False
    if cond.kind == "succeeded":
        return True
    raw = dep.outcome.get(cond.field or "")
    if cond.kind == "equals":
        return str(raw) == (cond.value or "")
    if cond.kind == "contains":
        return (cond.value or "") in str(raw)
    return False


class TraceKind(str, Enum):
    THOUGHT = "THOUGHT"
    ACTION = "ACTION"
    OBSERVATION = "OBSERVATION"
    REFLECTION = "REFLECTION"


@dataclass
class TraceEntry:
    kind: TraceKind
    text: str
    ts: int
    step_id: Optional[str] = None

    def to_json(self) -> dict:
        return {"kind": self.kind.value, "text": self.text, "ts": self.ts, "step_id": self.step_id}


@dataclass
class ReasoningTrace:
    entries: List[TraceEntry] = field(default_factory=list)

    def add(self, kind: TraceKind, text: str, ts: int, step_id: Optional[str] = None) -> None:
        self.entries.append(TraceEntry(kind, text, ts, step_id))

    def to_json(self) -> dict:
        # copy: HTTP threads serialize while the owning workflow appends
        return {"entries": [e.to_json() for e in list(self.entries)]}

    def check_action_pairing(self) -> List[str]:
        """Step ids whose ACTION entry is never followed by an OBSERVATION."""
        unmatched: List[str] = []
        for i, entry in enumerate(self.entries):
            if entry.kind != TraceKind.ACTION or entry.step_id is None:
                continue
            if not any(
                later.kind == TraceKind.OBSERVATION and later.step_id == entry.step_id
                for later in self.entries[i + 1 :]
            ):
                unmatched.append(entry.step_id)
        return unmatched


class UncertaintyTag(str, Enum):
    LOW_CONFIDENCE_TIMEOUT = "LOW_CONFIDENCE_TIMEOUT"


@dataclass
class DiagnosticSummary:
    incident_id: str
    headline: str
    fault_component: str
    hypothesis: Hypothesis
    findings: Dict[str, str]
    recommended_action: str
    recommended_tool: Optional[str]
    produced_at: int
    uncertainty_tag: Optional[UncertaintyTag] = None

    def to_json(self) -> dict:
        return {
            "incident_id": self.incident_id,
            "headline": self.headline,
            "fault_component": self.fault_component,
            "hypothesis": self.hypothesis.to_json(),
            "findings": dict(sorted(self.findings.items())),
            "recommended_action": self.recommended_action,
            "recommended_tool": self.recommended_tool,
            "produced_at": self.produced_at,
            "uncertainty_tag": self.uncertainty_tag.value if self.uncertainty_tag else None,
        }

    def text_surface(self) -> str:
        """All human-readable text of the summary, for coverage checks."""
        parts = [self.headline, self.fault_component, self.hypothesis.statement, self.recommended_action]
        parts += [f"{k}: {v}" for k, v in sorted(self.findings.items())]
        return "\n".join(parts)

    @classmethod
    def from_json(cls, obj: dict) -> "DiagnosticSummary":
        h = obj["hypothesis"]
        hypothesis = Hypothesis(
            statement=h["statement"],
            fault_component=h["fault_component"],
            kind=HypothesisKind(h["kind"]),
            confidence=float(h["confidence"]),
            evidence_refs=[(r[0], r[1]) for r in h.get("evidence_refs", [])],
        )
        return cls(
            incident_id=obj["incident_id"],
            headline=obj["headline"],
            fault_component=obj["fault_component"],
            hypothesis=hypothesis,
            findings={str(k): str(v) for k, v in obj.get("findings", {}).items()},
            recommended_action=obj.get("recommended_action", ""),
            recommended_tool=obj.get("recommended_tool"),
            produced_at=int(obj["produced_at"]),
            uncertainty_tag=UncertaintyTag(obj["uncertainty_tag"]) if obj.get("uncertainty_tag") else None,
        )


# --------------------------------------------------------------------------
# Evidence index for grounding
# --------------------------------------------------------------------------

class EvidenceIndex:
    """Maps (ref_type, ref_id) -> searchable body text for grounding checks."""

    def __init__(self) -> None:
        self._bodies: Dict[Tuple[str, str], str] = {}

    def add(self, ref_type: str, ref_id: object, body: str) -> Tuple[str, str]:
        key = (ref_type, str(ref_id))
        self._bodies[key] = body
        return key

    def body(self, ref: Tuple[str, str]) -> Optional[str]:
        return self._bodies.get((ref[0], str(ref[1])))

    def refs(self) -> List[Tuple[str, str]]:
        return sorted(self._bodies)


def check_grounding(findings: Dict[str, str], refs: Sequence[Tuple[str, str]], index: EvidenceIndex) -> None:
    bodies = [index.body(r) or "" for r in refs]
    for label, value in findings.items():
        if value == "":
            continue
        if not any(value in b for b in bodies):
            raise GroundingViolation(f"finding {label!r}={value!r} not present in any evidence body")


# --------------------------------------------------------------------------
# Planner agent
# --------------------------------------------------------------------------

class PlannerAgent:
    def __init__(self, backend: ReasonerBackend):
        self.backend = backend

    # -- prompt assembly ----------------------------------------------------

    def _base_blocks(self, ctx: AlertContext, report: AnomalyReport) -> List[Tuple[str, str]]:
        alert_lines = [
            f"service={ctx.service}",
            f"alert_type={ctx.alert_type}",
            f"fired_at={ctx.fired_at}",
        ]
        for kind in sorted(ctx.identifiers):
            alert_lines.append(f"{kind}={ctx.identifiers[kind]}")
        anomaly_lines = [
            f"{a['classification']} {a['event']['service']} {a['event']['level']} {a['event']['message']}"
            for a in report.anomalies[:20]
        ]
        return [
            ("alert", "\n".join(alert_lines)),
            ("facts", json.dumps(report_facts(ctx, report), sort_keys=True)),
            ("anomalies", "\n".join(anomaly_lines) or "(none)"),
        ]

    def _complete(self, schema_id: str, blocks: List[Tuple[str, str]]) -> dict:
        prompt = render_prompt(AgentRole.PLANNER, PLANNER_INSTRUCTIONS, blocks, schema_id)
        return self.backend.complete(prompt).body

    # -- operations ---------------------------------------------------------

    def identify_gaps(self, ctx: AlertContext, report: AnomalyReport) -> List[InfoGap]:
        body = self._complete("gaps.v1", self._base_blocks(ctx, report))
        return [
            InfoGap(g["gap_id"], g["description"], GapSource(g["resolvable_by"]))
            for g in body["gaps"]
        ]

    def formulate_plan(
        self,
        ctx: AlertContext,
        report: AnomalyReport,
        gaps: List[InfoGap],
        revision: int = 0,
        directives: Optional[List[str]] = None,
    ) -> Tuple[ActionPlan, Hypothesis]:
        blocks = self._base_blocks(ctx, report)
        blocks.append(("gaps", json.dumps([g.to_json() for g in gaps], sort_keys=True)))
        if directives:
            blocks.append(("directives", "\n".join(directives)))
        body = self._complete("plan.v1", blocks)
        hypothesis = Hypothesis.from_body(body["hypothesis"])
        steps = [_step_from_body(s) for s in body["steps"]]

        # Mechanical gap coverage: LOGS gaps get a default sweep; knowledge
        # gaps are satisfied through hypothesis routing when the rule did not
        # already plan retrieval.
        have_log_step = any(s.action == StepKind.QUERY_LOGS for s in steps)
        have_knowledge_step = any(s.action == StepKind.QUERY_KNOWLEDGE for s in steps)
        for gap in gaps:
            if gap.resolvable_by == GapSource.LOGS and not have_log_step:
                steps.append(
                    PlanStep(
                        step_id=f"logs-{gap.gap_id}",
                        goal=gap.description,
                        action=StepKind.QUERY_LOGS,
                        log_query={"window": "alert", "min_level": "WARN"},
                    )
                )
                have_log_step = True
        if any(g.resolvable_by in KNOWLEDGE_GAP_KINDS for g in gaps) and not have_knowledge_step:
            steps.extend(self.route_retrieval(hypothesis))

        synth = [s for s in steps if s.action == StepKind.SYNTHESIZE]
        if not synth:
            steps.append(PlanStep(step_id="synthesize", goal="synthesize findings", action=StepKind.SYNTHESIZE))
        else:
            steps = [s for s in steps if s.action != StepKind.SYNTHESIZE] + synth[:1]
        plan = ActionPlan(incident_id=ctx.incident_id, steps=steps, revision=revision)
        validate_plan(plan)
        return plan, hypothesis

    def route_retrieval(self, h: Hypothesis) -> List[PlanStep]:
        """Hypothesis-directed knowledge retrieval; nothing for UNKNOWN."""
        query = f"{h.fault_component} {h.statement}".strip()
        routes = {
            HypothesisKind.CODE_REGRESSION: ["DEPLOYMENT"],
            HypothesisKind.DATA_CONTENT: ["RUNBOOK"],
            HypothesisKind.CONFIG: ["RUNBOOK", "WIKI"],
            HypothesisKind.DEPENDENCY_FAILURE: ["RUNBOOK", "WIKI"],
            HypothesisKind.INFRA: ["RUNBOOK"],
            HypothesisKind.UNKNOWN: [],
        }
        return [
            PlanStep(
                step_id=f"retrieve-{kind.lower()}",
                goal=f"retrieve {kind.lower()} context for {h.fault_component or 'the incident'}",
                action=StepKind.QUERY_KNOWLEDGE,
                knowledge_kind=kind,
                query=query,
            )
            for kind in routes[h.kind]
        ]

    def synthesize_summary(
        self,
        ctx: AlertContext,
        report: AnomalyReport,
        plan: ActionPlan,
        evidence: EvidenceIndex,
        evidence_refs: List[Tuple[str, str]],
        produced_at: int,
    ) -> Tuple[Hypothesis, DiagnosticSummary]:
        unsettled = [
            s.step_id
            for s in plan.steps
            if s.action != StepKind.SYNTHESIZE
            and s.status not in (StepStatus.DONE, StepStatus.SKIPPED, StepStatus.FAILED)
            and not s.outcome.get("approval_pending")
        ]
        if unsettled:
            raise PlanInvalid(f"cannot synthesize with unsettled steps: {unsettled}")
        blocks = self._base_blocks(ctx, report)
        outcomes = {
            s.step_id: {"status": s.status.value, **{k: _jsonable(v) for k, v in s.outcome.items()}}
            for s in plan.steps
            if s.action != StepKind.SYNTHESIZE
        }
        blocks.append(("outcomes", json.dumps(outcomes, sort_keys=True)))
        body = self._complete("summary.v1", blocks)
        hypothesis = Hypothesis.from_body(body["hypothesis"])
        hypothesis.evidence_refs = list(evidence_refs)
        findings = {str(k): str(v) for k, v in body["findings"].items()}
        check_grounding(findings, evidence_refs, evidence)
        summary = DiagnosticSummary(
            incident_id=ctx.incident_id,
            headline=body["headline"],
            fault_component=body["fault_component"],
            hypothesis=hypothesis,
            findings=findings,
            recommended_action=body["recommended_action"]["text"],
            recommended_tool=body["recommended_action"].get("tool"),
            produced_at=produced_at,
        )
        return hypothesis, summary


def _step_from_body(s: dict) -> PlanStep:
    action = s["action"]
    cond = None
    if s.get("condition"):
        c = s["condition"]
        cond = StepCondition(step_id=c["step_id"], kind=c["kind"], field=c.get("field"), value=c.get("value"))
    return PlanStep(
        step_id=s["step_id"],
        goal=s["goal"],
        action=StepKind(action["type"]),
        tool=action.get("tool"),
        args=dict(action.get("args", {})),
        knowledge_kind=action.get("kind"),
        query=action.get("query"),
        log_query=action.get("log_query"),
        condition=cond,
    )


def _jsonable(v: object) -> object:
    if isinstance(v, (str, int, float, bool)) or v is None:
        return v
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    return str(v)
