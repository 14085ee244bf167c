"""Meta-evaluation of synthesized findings with a bounded revision loop.

Three criteria gate every summary: completeness (all anomalous services are
covered by the summary), causality (the hypothesis cites evidence that does
not postdate the alert), and actionability (the recommendation names a
registered tool or a known runbook). Mechanical pre-checks run first; the
reasoner may only add failures, never override a mechanical one. Five cycles
maximum, after which the most confident hypothesis ships with an explicit
uncertainty tag.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, List, Optional

from .log_agent import AnomalyReport
from .planner import ActionPlan, DiagnosticSummary, UncertaintyTag
from .reasoner import AgentRole, ReasonerBackend, render_prompt

MAX_REFLECTION_CYCLES = 5

REFLECTOR_INSTRUCTIONS = (
    "You audit a proposed incident diagnosis. Fail any criterion the evidence "
    "does not support; you may not pass a criterion the mechanical checks failed."
)


@dataclass
class CriterionResult:
    passed: bool
    rationale: str

    def to_json(self) -> dict:
        return {"pass": self.passed, "rationale": self.rationale}


@dataclass
class ReflectionVerdict:
    cycle: int
    completeness: CriterionResult
    causality: CriterionResult
    actionability: CriterionResult
    revision_directives: List[str] = field(default_factory=list)

    @property
    def overall(self) -> str:
        ok = self.completeness.passed and self.causality.passed and self.actionability.passed
        return "ACCEPT" if ok else "REVISE"

    def to_json(self) -> dict:
        return {
            "cycle": self.cycle,
            "completeness": self.completeness.to_json(),
            "causality": self.causality.to_json(),
            "actionability": self.actionability.to_json(),
            "overall": self.overall,
            "revision_directives": list(self.revision_directives),
        }


class ReflectionAgent:
    def __init__(
        self,
        backend: ReasonerBackend,
        tool_exists: Callable[[str], bool],
        runbook_titles: Callable[[], List[str]],
    ):
        self.backend = backend
        self.tool_exists = tool_exists
        self.runbook_titles = runbook_titles

    # -- mechanical pre-checks ----------------------------------------------

    def _check_completeness(self, summary: DiagnosticSummary, report: AnomalyReport) -> CriterionResult:
        surface = summary.text_surface().lower()
        services = sorted({a["event"]["service"] for a in report.anomalies})
        missing = [s for s in services if s.lower() not in surface]
        if missing:
            return CriterionResult(False, f"services not covered by the summary: {missing}")
        return CriterionResult(True, f"all {len(services)} anomalous service(s) covered")

    def _check_causality(
        self, summary: DiagnosticSummary, report: AnomalyReport, fired_at: int
    ) -> CriterionResult:
        refs = summary.hypothesis.evidence_refs
        if not refs:
            return CriterionResult(False, "hypothesis cites no evidence")
        for ref_type, ref_id in refs:
            if ref_type != "event":
                continue
            ev = report.events_by_id.get(int(ref_id)) if ref_id.lstrip("-").isdigit() else None
            if ev is not None and ev.ts > fired_at:
                return CriterionResult(
                    False, f"evidence event {ref_id} at {ev.ts} postdates the alert at {fired_at}"
                )
        return CriterionResult(True, f"{len(refs)} evidence ref(s), none postdating the alert")

    def _check_actionability(self, summary: DiagnosticSummary) -> CriterionResult:
        if summary.recommended_tool:
            if self.tool_exists(summary.recommended_tool):
                return CriterionResult(True, f"recommends registered tool {summary.recommended_tool}")
            return CriterionResult(False, f"recommended tool {summary.recommended_tool!r} is not registered")
        text = summary.recommended_action.lower()
        for title in self.runbook_titles():
            if title.lower() in text:
                return CriterionResult(True, f"recommendation cites runbook {title!r}")
        return CriterionResult(False, "recommendation names neither a registered tool nor a known runbook")

    # -- operations ----------------------------------------------------------

    def evaluate(
        self,
        summary: DiagnosticSummary,
        report: AnomalyReport,
        plan: ActionPlan,
        cycle: int,
        fired_at: int,
    ) -> ReflectionVerdict:
        if not 1 <= cycle <= MAX_REFLECTION_CYCLES:
            raise ValueError(f"cycle {cycle} outside [1,{MAX_REFLECTION_CYCLES}]")
        mech = {
            "completeness": self._check_completeness(summary, report),
            "causality": self._check_causality(summary, report, fired_at),
            "actionability": self._check_actionability(summary),
        }
        blocks = [
            ("summary", json.dumps(summary.to_json(), sort_keys=True)),
            ("plan", json.dumps({"revision": plan.revision, "steps": len(plan.steps)}, sort_keys=True)),
            (
                "mechanical_checks",
                json.dumps({k: v.to_json() for k, v in mech.items()}, sort_keys=True),
            ),
        ]
        prompt = render_prompt(AgentRole.REFLECTOR, REFLECTOR_INSTRUCTIONS, blocks, "verdict.v1")
        body = self.backend.complete(prompt).body

        def combine(name: str) -> CriterionResult:
            m = mech[name]
            model_pass = bool(body[name]["pass"])
            if not m.passed:
                return m  # mechanical failure cannot be overridden
            if not model_pass:
                return CriterionResult(False, body[name].get("rationale", "model downgraded"))
            return m

        verdict = ReflectionVerdict(
            cycle=cycle,
            completeness=combine("completeness"),
            causality=combine("causality"),
            actionability=combine("actionability"),
        )
        if verdict.overall == "REVISE":
            directives = [r for r in body.get("revision_directives", []) if r]
            directives += [
                f"{name}: {res.rationale}"
                for name, res in (
                    ("completeness", verdict.completeness),
                    ("causality", verdict.causality),
                    ("actionability", verdict.actionability),
                )
                if not res.passed
            ]
            verdict.revision_directives = directives
        return verdict


@dataclass
class LoopOutcome:
    action: str  # "CONTINUE" | "FINALIZE"
    directives: List[str] = field(default_factory=list)
    tag: Optional[UncertaintyTag] = None


def should_iterate(verdict: ReflectionVerdict, cycle: int) -> LoopOutcome:
    """ACCEPT finalizes untagged; REVISE continues until the cycle bound, then
    finalizes with the uncertainty tag."""
    if not 1 <= cycle <= MAX_REFLECTION_CYCLES:
        raise ValueError(f"cycle {cycle} outside [1,{MAX_REFLECTION_CYCLES}]")
    if verdict.overall == "ACCEPT":
        return LoopOutcome(action="FINALIZE")
    if cycle < MAX_REFLECTION_CYCLES:
        return LoopOutcome(action="CONTINUE", directives=list(verdict.revision_directives))
    return LoopOutcome(action="FINALIZE", tag=UncertaintyTag.LOW_CONFIDENCE_TIMEOUT)


def best_hypothesis_index(confidences: List[float]) -> int:
    """Argmax by confidence; ties resolve to the latest cycle."""
    best = 0
    for i, c in enumerate(confidences):
        if c >= confidences[best]:
            best = i
    return best
