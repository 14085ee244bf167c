"""Workflow engine: drives each incident through the agent state machine,
interleaves downstream log fetches with planning, gates high-risk actions on
approval, and dispatches notifications.

The same workflow logic runs on any runtime: simulated time for replay, real
threads for serve mode, or the inline runtime for the single-step test
driver. Within an incident only log/trace fetches parallelize with planning;
the synthesis barrier joins (or cuts off) outstanding fetches so the final
report is independent of completion order.
"""

from __future__ import annotations

import json
import logging
import threading
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

from .actions import ActionRuntime, Decision, ToolStatus
from .errors import (
    BackendUnavailable,
    GroundingViolation,
    LogRetrievalUnavailable,
    MalformedModelOutput,
    NoRuleMatched,
    PlanInvalid,
    TerminalState,
)
from .gateway import Alert, AlertGateway, IncidentRecord, IncidentState, IncidentStore
from .knowledge import DocKind, KnowledgeStore
from .log_agent import AlertContext, AnomalyReport, LogAgent, ReportBuilder, reachable_services
from .planner import (
    ActionPlan,
    DiagnosticSummary,
    EvidenceIndex,
    Hypothesis,
    PlannerAgent,
    ReasoningTrace,
    StepKind,
    StepStatus,
    TraceKind,
    eval_condition,
)
from .reasoner import ReasonerBackend
from .reflection import ReflectionAgent, should_iterate
from .runtime import TIMEOUT, Runtime, Semaphore, Task
from .telemetry import LogLevel, LogQuery, TelemetryStore, with_backoff

logger = logging.getLogger(__name__)


@dataclass
class EngineConfig:
    parallel_fetch: bool = True
    workers: int = 8
    approval_policy: str = "manual"  # manual | auto_approve | auto_deny | none
    approval_delay_s: float = 1.0
    approval_ttl_s: float = 900.0
    fetch_deadline_s: Optional[float] = None  # None: synthesis joins every fetch
    knowledge_k: int = 3
    deployment_recency_s: float = 7 * 24 * 3600.0


class NotificationSink:
    def post(self, payload: dict) -> bool:
        raise NotImplementedError


class RecordingSink(NotificationSink):
    """Default sink for replay/tests: records payloads in memory."""

    def __init__(self, fail_first: int = 0):
        self.posts: List[dict] = []
        self._fail_remaining = fail_first

    def post(self, payload: dict) -> bool:
        if self._fail_remaining > 0:
            self._fail_remaining -= 1
            return False
        self.posts.append(payload)
        return True


class WebhookSink(NotificationSink):
    def __init__(self, url: str, timeout_s: float = 5.0):
        self.url = url
        self.timeout_s = timeout_s

    def post(self, payload: dict) -> bool:
        import requests

        try:
            resp = requests.post(self.url, json=payload, timeout=self.timeout_s)
            return resp.status_code < 400
        except requests.RequestException:
            return False


NOTIFY_ATTEMPTS = 3


@dataclass
class PendingFetch:
    service: str
    task: Task


class TriageEngine:
    """Wires the stores and agents together and owns incident workflows."""

    def __init__(
        self,
        runtime: Runtime,
        incident_store: IncidentStore,
        gateway: AlertGateway,
        telemetry: TelemetryStore,
        knowledge: KnowledgeStore,
        reasoner: ReasonerBackend,
        actions: ActionRuntime,
        topology: Optional[Dict[str, List[str]]] = None,
        config: Optional[EngineConfig] = None,
        sink: Optional[NotificationSink] = None,
        charge_provider: Optional[Callable[[IncidentRecord], Dict[str, float]]] = None,
        on_incident_open: Optional[Callable[[IncidentRecord, Alert], None]] = None,
    ):
        self.runtime = runtime
        self.incidents = incident_store
        self.gateway = gateway
        self.telemetry = telemetry
        self.knowledge = knowledge
        self.reasoner = reasoner
        self.actions = actions
        self.topology = topology or {}
        self.config = config or EngineConfig()
        self.sink = sink or RecordingSink()
        self.charge_provider = charge_provider
        self.on_incident_open = on_incident_open
        self.log_agent = LogAgent(telemetry, runtime, topology=self.topology)
        self.planner = PlannerAgent(reasoner)
        self.reflector = ReflectionAgent(
            reasoner,
            tool_exists=actions.has_tool,
            runbook_titles=self._runbook_titles,
        )
        self.traces: Dict[str, ReasoningTrace] = {}
        self._workflows: Dict[str, TriageWorkflow] = {}
        self._pool = Semaphore(runtime, self.config.workers)
        self._lock = threading.RLock()

    def _runbook_titles(self) -> List[str]:
        # Runbooks and wikis both count as actionable references.
        return [d.title for d in self.knowledge.docs_of_kind(DocKind.RUNBOOK, DocKind.WIKI)]

    # -- entry points ---------------------------------------------------------

    def handle_alert(self, alert: Alert, spawn: bool = True) -> str:
        """Admit an alert; when it opens a new incident, start its workflow."""
        rec, opened = self.gateway.admit(alert, self.runtime.now_ms())
        if opened:
            if self.on_incident_open is not None:
                self.on_incident_open(rec, alert)
            if spawn:
                self.runtime.spawn(lambda r=rec: self.run_workflow(r), name=f"wf-{rec.incident_id}")
        return rec.incident_id

    def run_workflow(self, rec: IncidentRecord) -> None:
        self._pool.acquire()
        try:
            wf = self.workflow_for(rec)
            while rec.state not in (IncidentState.CLOSED, IncidentState.FAILED):
                wf.advance()
        except Exception as exc:  # defect guard: never leave an incident non-terminal
            logger.exception("workflow crash on %s", rec.incident_id)
            rec.failure_reason = f"workflow crash: {exc}"
            rec.enter_state(IncidentState.FAILED, self.runtime.now_ms())
        finally:
            self._pool.release()

    def workflow_for(self, rec: IncidentRecord) -> "TriageWorkflow":
        with self._lock:
            wf = self._workflows.get(rec.incident_id)
            if wf is None:
                wf = TriageWorkflow(self, rec)
                self._workflows[rec.incident_id] = wf
            return wf

    def step(self, incident_id: str) -> IncidentState:
        """Advance exactly one transition (deterministic single-step driver)."""
        rec = self.incidents.get(incident_id)
        if rec is None:
            raise TerminalState(f"unknown incident {incident_id}")
        if rec.state in (IncidentState.CLOSED, IncidentState.FAILED):
            raise TerminalState(f"incident {incident_id} already {rec.state.value}")
        return self.workflow_for(rec).advance()

    def trace_for(self, incident_id: str) -> ReasoningTrace:
        with self._lock:
            return self.traces.setdefault(incident_id, ReasoningTrace())

    # -- approval policy hooks ------------------------------------------------

    def on_pending_approval(self, approval_id: str) -> None:
        policy = self.config.approval_policy
        ttl = self.config.approval_ttl_s

        def expire() -> None:
            self.runtime.sleep(ttl + 0.001)
            self.actions.expire_stale(self.runtime.now_ms(), ttl)

        self.runtime.spawn(expire, name=f"expire-{approval_id}")
        if policy in ("auto_approve", "auto_deny"):
            decision = Decision.APPROVED if policy == "auto_approve" else Decision.DENIED

            def operator() -> None:
                self.runtime.sleep(self.config.approval_delay_s)
                try:
                    self.actions.resolve_approval(approval_id, decision, actor="sim-operator")
                except Exception:
                    pass  # already decided or expired

            self.runtime.spawn(operator, name=f"operator-{approval_id}")

    # -- notification -----------------------------------------------------------

    def notify(self, rec: IncidentRecord, summary: DiagnosticSummary) -> dict:
        payload = {
            "incident_id": rec.incident_id,
            "text": render_notification_text(summary),
            "findings": dict(sorted(summary.findings.items())),
        }
        attempts = 0
        delivered = False
        for i in range(NOTIFY_ATTEMPTS):
            attempts += 1
            if self.sink.post(payload):
                delivered = True
                break
            if i < NOTIFY_ATTEMPTS - 1:
                self.runtime.sleep(0.5)
        receipt = {
            "posted_at": self.runtime.now_ms(),
            "attempts": attempts,
            "degraded": not delivered,
        }
        if not delivered:
            receipt["note"] = "NOTIFIED_DEGRADED: sink unreachable, proceeding"
        return receipt


def render_notification_text(summary: DiagnosticSummary) -> str:
    lines = [summary.headline]
    lines += [f"- {k}: {v}" for k, v in sorted(summary.findings.items())]
    lines.append(f"Recommended action: {summary.recommended_action}")
    if summary.uncertainty_tag is not None:
        lines.append(f"[{summary.uncertainty_tag.value}]")
    return "\n".join(lines)


class TriageWorkflow:
    """Single-owner state machine for one incident."""

    def __init__(self, engine: TriageEngine, rec: IncidentRecord):
        self.engine = engine
        self.rec = rec
        self.trace = engine.trace_for(rec.incident_id)
        self.ctx: Optional[AlertContext] = None
        self.builder: Optional[ReportBuilder] = None
        self.report: Optional[AnomalyReport] = None
        self.plan: Optional[ActionPlan] = None
        self.plan_hypothesis: Optional[Hypothesis] = None
        self.gaps = []
        self.directives: List[str] = []
        self.evidence = EvidenceIndex()
        self.evidence_refs: List[Tuple[str, str]] = []
        self.fetches: List[PendingFetch] = []
        self.candidates: List[Tuple[float, int, DiagnosticSummary]] = []  # (confidence, cycle, summary)
        self.pending_approvals: Dict[str, str] = {}  # approval_id -> step_id
        self.current_summary: Optional[DiagnosticSummary] = None
        self._charges: Optional[Dict[str, float]] = None
        self._charged: set = set()
        self._step_cache: Dict[str, Tuple[StepStatus, dict]] = {}  # action signature -> outcome

    # -- helpers -------------------------------------------------------------

    @property
    def runtime(self) -> Runtime:
        return self.engine.runtime

    def _now(self) -> int:
        return self.runtime.now_ms()

    def _enter(self, state: IncidentState) -> IncidentState:
        self.rec.enter_state(state, self._now())
        return state

    def _charge(self, phase: str) -> None:
        """Sleep the simulated duration bound to this phase, once."""
        if phase in self._charged:
            return
        self._charged.add(phase)
        if self._charges is None:
            provider = self.engine.charge_provider
            self._charges = provider(self.rec) if provider else {}
        seconds = self._charges.get(phase, 0.0)
        if seconds > 0:
            self.runtime.sleep(seconds)

    def _fail(self, reason: str) -> IncidentState:
        self.rec.failure_reason = reason
        self._snapshot()
        logger.warning("incident %s failed: %s", self.rec.incident_id, reason)
        return self._enter(IncidentState.FAILED)

    def _snapshot(self) -> None:
        if self.plan is not None:
            self.rec.plan = self.plan.to_json()
        if self.report is not None:
            self.rec.anomaly_report = self.report.to_canonical()
            self.rec.coverage_note = self.report.coverage_note

    # -- state machine ---------------------------------------------------------

    def advance(self) -> IncidentState:
        state = self.rec.state
        try:
            if state == IncidentState.RECEIVED:
                return self._enter(IncidentState.LOG_RETRIEVAL)
            if state == IncidentState.LOG_RETRIEVAL:
                self._do_log_retrieval()
                return self._enter(IncidentState.PLANNING)
            if state == IncidentState.PLANNING:
                self._do_planning()
                return self._enter(IncidentState.EXECUTING)
            if state == IncidentState.EXECUTING:
                self._do_executing()
                return self._enter(IncidentState.REFLECTING)
            if state == IncidentState.REFLECTING:
                return self._do_reflecting()
            if state == IncidentState.SUMMARIZED:
                self._do_notify()
                return self._enter(IncidentState.NOTIFIED)
            if state == IncidentState.NOTIFIED:
                self._do_close()
                return self._enter(IncidentState.CLOSED)
        except (NoRuleMatched, BackendUnavailable, MalformedModelOutput) as exc:
            return self._fail(f"reasoner: {exc}")
        except (PlanInvalid, GroundingViolation) as exc:
            return self._fail(str(exc))
        except LogRetrievalUnavailable as exc:
            return self._fail(f"log retrieval unavailable: {exc}")
        raise TerminalState(f"incident {self.rec.incident_id} is {state.value}")

    # -- phases ---------------------------------------------------------------

    def _do_log_retrieval(self) -> None:
        alert = self.rec.first_alert
        self.ctx = self.engine.log_agent.extract_metadata(alert, self.rec.incident_id)
        self.trace.add(
            TraceKind.THOUGHT,
            f"alert {alert.alert_type} on {alert.service}; querying window "
            f"[{self.ctx.window_start},{self.ctx.window_end}] with {len(self.ctx.identifiers)} identifier(s)",
            self._now(),
        )
        self.builder = self.engine.log_agent.new_builder(self.ctx)
        self.engine.log_agent.collect_into(self.ctx, self.builder)
        self.report = self.builder.finalize()
        self.trace.add(
            TraceKind.OBSERVATION,
            f"{len(self.report.anomalies)} anomaly(ies), "
            f"{len(self.report.causal_candidates)} causal candidate(s)",
            self._now(),
        )
        self._spawn_downstream_fetches()
        self._charge("LOG_RETRIEVAL")

    def _fetch_targets(self) -> List[str]:
        assert self.ctx is not None and self.report is not None
        targets = {s for ch in self.report.trace_chains for s in ch["services"]}
        targets |= set(reachable_services(self.engine.topology, self.ctx.service))
        targets.discard(self.ctx.service)
        return sorted(targets)

    def _spawn_downstream_fetches(self) -> None:
        """Fetch full window slices from downstream services; in parallel mode
        these overlap planning and execution, merging before synthesis."""
        assert self.ctx is not None and self.builder is not None
        targets = self._fetch_targets()
        if not targets:
            return
        agent = self.engine.log_agent
        ctx, builder = self.ctx, self.builder

        def fetch(service: str) -> None:
            try:
                events = agent.fetch_service_window(ctx, service)
                builder.add_events(events, queried_service=service)
            except LogRetrievalUnavailable as exc:
                builder.note_failure(service, str(exc))

        if self.engine.config.parallel_fetch:
            for svc in targets:
                task = self.runtime.spawn(
                    lambda s=svc: fetch(s), name=f"fetch-{self.rec.incident_id}-{svc}"
                )
                self.fetches.append(PendingFetch(service=svc, task=task))
        else:
            for svc in targets:
                fetch(svc)

    def _do_planning(self) -> None:
        assert self.ctx is not None and self.report is not None
        revision = self.plan.revision + 1 if self.plan is not None else 0
        self.gaps = self.engine.planner.identify_gaps(self.ctx, self.report)
        self.trace.add(
            TraceKind.THOUGHT,
            "gaps: " + ("; ".join(g.description for g in self.gaps) or "(none)"),
            self._now(),
        )
        plan, hypothesis = self.engine.planner.formulate_plan(
            self.ctx, self.report, self.gaps, revision=revision, directives=self.directives or None
        )
        self.plan = plan
        self.plan_hypothesis = hypothesis
        self.trace.add(
            TraceKind.THOUGHT,
            f"plan r{plan.revision}: "
            + " -> ".join(f"{s.step_id}({s.action.value})" for s in plan.steps),
            self._now(),
        )
        self._charge("PLANNING")

    def _signature(self, step) -> str:
        return json.dumps(
            {
                "action": step.action.value,
                "tool": step.tool,
                "args": step.args,
                "kind": step.knowledge_kind,
                "query": step.query,
                "log_query": step.log_query,
            },
            sort_keys=True,
        )

    def _do_executing(self) -> None:
        assert self.plan is not None and self.ctx is not None
        for step in self.plan.steps:
            if step.action == StepKind.SYNTHESIZE:
                continue
            if not eval_condition(step.condition, self.plan):
                step.status = StepStatus.SKIPPED
                step.outcome = {"reason": f"condition on {step.condition.step_id} not met"}
                continue
            sig = self._signature(step)
            cached = self._step_cache.get(sig)
            if cached is not None:
                # Revision reuse: inputs unchanged, so completed outcomes and
                # still-pending approvals carry over instead of re-executing.
                step.status, step.outcome = cached[0], dict(cached[1])
                continue
            step.status = StepStatus.RUNNING
            self._execute_step(step)
            if step.status == StepStatus.DONE:
                self._step_cache[sig] = (step.status, dict(step.outcome))
            elif step.outcome.get("approval_pending"):
                self._step_cache[sig] = (StepStatus.PENDING, dict(step.outcome))
        self._synthesis_barrier()
        self._charge("EXECUTING")
        self._synthesize()

    def _execute_step(self, step) -> None:
        now = self._now()
        if step.action == StepKind.INVOKE_TOOL:
            self.trace.add(
                TraceKind.ACTION,
                f"invoke {step.tool} {json.dumps(step.args, sort_keys=True)}",
                now,
                step.step_id,
            )
            try:
                execution = self.engine.actions.request_execution(
                    self.rec.incident_id, step.tool or "", step.args
                )
            except Exception as exc:
                step.status = StepStatus.FAILED
                step.outcome = {"error": str(exc)}
                self.trace.add(TraceKind.OBSERVATION, f"tool error: {exc}", self._now(), step.step_id)
                return
            if execution.pending:
                step.status = StepStatus.PENDING
                step.outcome = {"approval_pending": execution.approval_id}
                self.pending_approvals[execution.approval_id] = step.step_id
                self.engine.on_pending_approval(execution.approval_id)
                self.trace.add(
                    TraceKind.OBSERVATION,
                    f"high-risk {step.tool} awaiting approval {execution.approval_id}",
                    self._now(),
                    step.step_id,
                )
                return
            result = execution.result
            step.status = StepStatus.DONE if result.status == ToolStatus.OK else StepStatus.FAILED
            step.outcome = {"status": result.status.value, **result.output}
            self.evidence_refs.append(self.evidence.add("tool", step.step_id, result.body_text()))
            self.trace.add(
                TraceKind.OBSERVATION,
                f"{step.tool} -> {result.status.value} {json.dumps(result.output, sort_keys=True, default=str)}",
                self._now(),
                step.step_id,
            )
        elif step.action == StepKind.QUERY_KNOWLEDGE:
            self.trace.add(
                TraceKind.ACTION,
                f"retrieve {step.knowledge_kind} docs: {step.query!r}",
                now,
                step.step_id,
            )
            self._run_knowledge_step(step)
        elif step.action == StepKind.QUERY_LOGS:
            self.trace.add(TraceKind.ACTION, f"log query {json.dumps(step.log_query or {}, sort_keys=True)}", now, step.step_id)
            self._run_log_step(step)

    def _run_knowledge_step(self, step) -> None:
        kb = self.engine.knowledge
        kind = DocKind(step.knowledge_kind) if step.knowledge_kind else None
        try:
            if kind == DocKind.DEPLOYMENT:
                since = self.ctx.fired_at - int(self.engine.config.deployment_recency_s * 1000)
                recent = {d.doc_id for d in kb.recent_deployments(self.ctx.service, since)}
                hits = [
                    h
                    for h in kb.search(step.query or "", k=10, kind_filter=kind)
                    if h.doc_id in recent
                ][: self.engine.config.knowledge_k]
            else:
                hits = kb.search(step.query or "", k=self.engine.config.knowledge_k, kind_filter=kind)
        except Exception as exc:
            step.status = StepStatus.FAILED
            step.outcome = {"error": str(exc)}
            self.trace.add(TraceKind.OBSERVATION, f"retrieval failed: {exc}", self._now(), step.step_id)
            return
        titles, top_meta = [], {}
        for h in hits:
            doc = kb.get(h.doc_id)
            if doc is None:
                continue
            titles.append(doc.title)
            self.evidence_refs.append(self.evidence.add("doc", doc.doc_id, f"{doc.title}\n{doc.body}"))
            if not top_meta:
                top_meta = {f"top_{k}": v for k, v in sorted(doc.meta.items())}
                top_meta["top_title"] = doc.title
                top_meta["top_doc_id"] = doc.doc_id
        step.status = StepStatus.DONE
        step.outcome = {"hits": len(hits), "titles": titles, **top_meta}
        self.trace.add(
            TraceKind.OBSERVATION,
            f"{len(hits)} doc(s): {titles}",
            self._now(),
            step.step_id,
        )

    def _run_log_step(self, step) -> None:
        spec = step.log_query or {}
        q = LogQuery(
            start_ms=self.ctx.window_start,
            end_ms=self.ctx.window_end,
            services={spec["service"]} if spec.get("service") else None,
            min_level=LogLevel(spec["min_level"]) if spec.get("min_level") else None,
            text_match=spec.get("text") or spec.get("text_match"),
            limit=int(spec.get("limit", 200)),
        )
        try:
            events = with_backoff(self.runtime, self.engine.telemetry.query, q)
        except LogRetrievalUnavailable as exc:
            step.status = StepStatus.FAILED
            step.outcome = {"error": str(exc)}
            self.trace.add(TraceKind.OBSERVATION, f"log query failed: {exc}", self._now(), step.step_id)
            return
        self.builder.add_events(events)
        for ev in events:
            if ev.ts <= self.ctx.fired_at:  # post-alert events are context, not causal evidence
                self.evidence_refs.append(self.evidence.add("event", ev.event_id, ev.body_text()))
        step.status = StepStatus.DONE
        step.outcome = {"events": len(events), "event_ids": [e.event_id for e in events]}
        self.trace.add(TraceKind.OBSERVATION, f"{len(events)} event(s)", self._now(), step.step_id)

    def _synthesis_barrier(self) -> None:
        """Join outstanding fetches (or cut them off at the deadline), then
        freeze and rebuild the report so synthesis sees the merged dataset."""
        deadline = self.engine.config.fetch_deadline_s
        for pf in self.fetches:
            done = pf.task.join(deadline)
            if not done:
                self.builder.note_late(pf.service)
        self.fetches = []
        self.builder.freeze()
        self.report = self.builder.finalize()
        self._refresh_evidence()

    def _refresh_evidence(self) -> None:
        """Causal candidates and chain events at or before the alert ground
        the hypothesis; anything later is observable context only."""
        assert self.report is not None and self.ctx is not None
        fired = self.ctx.fired_at
        refs: List[Tuple[str, str]] = []
        for cand in self.report.causal_candidates:
            ev = self.report.events_by_id[cand["event_id"]]
            if ev.ts <= fired:
                refs.append(self.evidence.add("event", ev.event_id, ev.body_text()))
        for chain in self.report.trace_chains:
            for eid in chain["event_ids"]:
                ev = self.report.events_by_id[eid]
                if ev.ts <= fired:
                    refs.append(self.evidence.add("event", ev.event_id, ev.body_text()))
        seen = set()
        ordered: List[Tuple[str, str]] = []
        for ref in refs + self.evidence_refs:
            if ref not in seen:
                seen.add(ref)
                ordered.append(ref)
        self.evidence_refs = ordered

    def _synthesize(self) -> None:
        assert self.plan is not None
        synth_step = self.plan.steps[-1]
        synth_step.status = StepStatus.RUNNING
        self.trace.add(TraceKind.ACTION, "synthesize diagnostic summary", self._now(), synth_step.step_id)
        hypothesis, summary = self.engine.planner.synthesize_summary(
            self.ctx,
            self.report,
            self.plan,
            self.evidence,
            self.evidence_refs,
            produced_at=self._now(),
        )
        synth_step.status = StepStatus.DONE
        synth_step.outcome = {"fault_component": summary.fault_component}
        self.current_summary = summary
        self.trace.add(
            TraceKind.OBSERVATION,
            f"summary: {summary.headline} (confidence {hypothesis.confidence:.2f})",
            self._now(),
            synth_step.step_id,
        )

    def _do_reflecting(self) -> IncidentState:
        assert self.current_summary is not None and self.report is not None and self.plan is not None
        cycle = self.rec.reflection_cycles_used + 1
        self.rec.reflection_cycles_used = cycle
        verdict = self.engine.reflector.evaluate(
            self.current_summary, self.report, self.plan, cycle, self.rec.first_alert.fired_at
        )
        self.trace.add(
            TraceKind.REFLECTION,
            f"cycle {cycle}: {verdict.overall} "
            f"(completeness={verdict.completeness.passed} causality={verdict.causality.passed} "
            f"actionability={verdict.actionability.passed})",
            self._now(),
        )
        self.candidates.append(
            (self.current_summary.hypothesis.confidence, cycle, self.current_summary)
        )
        outcome = should_iterate(verdict, cycle)
        if outcome.action == "CONTINUE":
            self.directives = outcome.directives
            return self._enter(IncidentState.PLANNING)
        chosen = self._best_candidate()
        if outcome.tag is not None:
            chosen.uncertainty_tag = outcome.tag
        self.rec.summary = chosen
        self.current_summary = chosen
        self._snapshot()
        return self._enter(IncidentState.SUMMARIZED)

    def _best_candidate(self) -> DiagnosticSummary:
        best = self.candidates[0]
        for cand in self.candidates[1:]:
            if cand[0] >= best[0]:  # ties resolve to the latest cycle
                best = cand
        return best[2]

    def _do_notify(self) -> None:
        assert self.rec.summary is not None
        self.rec.notification = self.engine.notify(self.rec, self.rec.summary)

    def _do_close(self) -> None:
        """Settle outstanding approvals (decision or TTL expiry), then close."""
        ttl = self.engine.config.approval_ttl_s
        for approval_id, step_id in sorted(self.pending_approvals.items()):
            req = self.engine.actions.get_approval(approval_id)
            result = None
            if req.cell is not None:
                value = req.cell.wait(timeout=ttl * 2)
                if value is not TIMEOUT:
                    result = value
            if result is None:
                self.engine.actions.expire_stale(self._now(), ttl)
                req = self.engine.actions.get_approval(approval_id)
                result = req.result
            step = self.plan.step(step_id) if self.plan else None
            if step is not None and result is not None:
                ok = result.status == ToolStatus.OK
                step.status = StepStatus.DONE if ok else StepStatus.FAILED
                step.outcome = {
                    "status": result.status.value,
                    "approval": req.decision.value,
                    **result.output,
                }
                self.trace.add(
                    TraceKind.OBSERVATION,
                    f"approval {approval_id} {req.decision.value}: {step.tool} -> {result.status.value}",
                    self._now(),
                    step_id,
                )
        self.pending_approvals = {}
        self._snapshot()
