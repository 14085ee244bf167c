"""Telemetry collection agent: extracts alert metadata, runs scoped log
queries, traces correlation identifiers across services, and emits the
structured anomaly dataset with ranked causal candidates.

The anomaly report is a pure function of the collected event set, so merging
late downstream fetches is order-insensitive and throttling can never change
report bodies, only their timing.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Set, Tuple

from .errors import LogRetrievalUnavailable
from .gateway import Alert
from .runtime import Runtime
from .telemetry import LogEvent, LogLevel, LogQuery, TelemetryStore, TraceChain, with_backoff

DEFAULT_LOOKBACK_S = 15 * 60
DEFAULT_LOOKAHEAD_S = 60
DEFAULT_QUERY_LIMIT = 500

# Payload keys scanned for promotable correlation identifiers.
IDENTIFIER_KEYS = {"session_id", "sessionid", "request_id", "requestid", "trace_id", "traceid"}


class AnomalyClass(str, Enum):
    ERROR_EVENT = "ERROR_EVENT"
    CORRELATED_DOWNSTREAM = "CORRELATED_DOWNSTREAM"
    PATTERN_MATCH = "PATTERN_MATCH"


@dataclass
class AlertContext:
    incident_id: str
    service: str
    alert_type: str
    fired_at: int
    identifiers: Dict[str, str]
    window_start: int
    window_end: int

    def window(self) -> Tuple[int, int]:
        return self.window_start, self.window_end


@dataclass
class AnomalyReport:
    anomalies: List[dict]            # {"event": {...}, "classification": str}
    causal_candidates: List[dict]    # {"event_id": int, "rationale": str}
    trace_chains: List[dict]
    coverage_note: str
    events_by_id: Dict[int, LogEvent] = field(default_factory=dict)

    def to_canonical(self) -> dict:
        """Timing-free body used for bitwise report comparisons."""
        return {
            "anomalies": self.anomalies,
            "causal_candidates": self.causal_candidates,
            "trace_chains": self.trace_chains,
            "coverage_note": self.coverage_note,
        }

    @property
    def anomaly_event_ids(self) -> List[int]:
        return [a["event"]["event_id"] for a in self.anomalies]


def service_distances(topology: Dict[str, List[str]], origin: str) -> Dict[str, int]:
    """BFS hop counts along dependency edges from the alerting service."""
    dist = {origin: 0}
    frontier = [origin]
    while frontier:
        nxt: List[str] = []
        for svc in frontier:
            for dep in topology.get(svc, []):
                if dep not in dist:
                    dist[dep] = dist[svc] + 1
                    nxt.append(dep)
        frontier = nxt
    return dist


def reachable_services(topology: Dict[str, List[str]], origin: str) -> List[str]:
    return sorted(service_distances(topology, origin))


class ReportBuilder:
    """Accumulates events from any number of fetches (in any completion
    order) and finalizes a canonical AnomalyReport."""

    def __init__(self, ctx: AlertContext, topology: Optional[Dict[str, List[str]]] = None):
        self.ctx = ctx
        self.topology = topology or {}
        self._events: Dict[int, LogEvent] = {}
        self._chains: Dict[Tuple[str, str], TraceChain] = {}
        self._queried: Set[str] = set()
        self._failed: List[str] = []
        self._late: List[str] = []
        self._frozen = False
        self._lock = threading.Lock()

    def add_events(self, events: List[LogEvent], queried_service: Optional[str] = None) -> None:
        with self._lock:
            if self._frozen:  # fetch completed after synthesis started
                return
            for ev in events:
                self._events[ev.event_id] = ev
                self._queried.add(ev.service)
            if queried_service:
                self._queried.add(queried_service)

    def add_chain(self, chain: TraceChain) -> None:
        with self._lock:
            if self._frozen:
                return
            self._chains[(chain.kind, chain.value)] = chain
        self.add_events(chain.events)

    def note_failure(self, target: str, reason: str) -> None:
        with self._lock:
            self._failed.append(f"{target}: {reason}")

    def note_late(self, service: str) -> None:
        with self._lock:
            self._late.append(service)

    def freeze(self) -> None:
        with self._lock:
            self._frozen = True

    def _classify(self, ev: LogEvent) -> Optional[AnomalyClass]:
        if ev.level == LogLevel.ERROR:
            return AnomalyClass.ERROR_EVENT
        correlated = any(ev.correlation.get(k) == v for k, v in self.ctx.identifiers.items())
        if correlated and ev.service != self.ctx.service:
            return AnomalyClass.CORRELATED_DOWNSTREAM
        if _matches_pattern(ev.message, self.ctx.alert_type):
            return AnomalyClass.PATTERN_MATCH
        return None

    def _chain_depth(self, ev: LogEvent) -> int:
        depth = 0
        for (kind, value), chain in self._chains.items():
            if ev.correlation.get(kind) == value:
                depth = max(depth, len(chain.services))
        return depth

    def finalize(self) -> AnomalyReport:
        with self._lock:
            events = dict(self._events)
            chain_keys = sorted(self._chains)
            queried = set(self._queried)
            failed = list(self._failed)
            late = list(self._late)
        dist = service_distances(self.topology, self.ctx.service)
        ordered = sorted(events.values(), key=lambda e: (e.ts, e.event_id))
        anomalies: List[dict] = []
        candidates: List[Tuple[tuple, LogEvent, int]] = []
        for ev in ordered:
            cls = self._classify(ev)
            if cls is None:
                continue
            anomalies.append({"event": ev.to_json(), "classification": cls.value})
            if cls == AnomalyClass.ERROR_EVENT:
                depth = self._chain_depth(ev)
                key = (ev.ts, -depth, dist.get(ev.service, 99), ev.event_id)
                candidates.append((key, ev, depth))
        candidates.sort(key=lambda c: c[0])
        causal = [
            {
                "event_id": ev.event_id,
                "rationale": f"ERROR in {ev.service} at {ev.ts - self.ctx.fired_at}ms relative "
                f"to the alert; correlation chain depth {depth}",
            }
            for _, ev, depth in candidates
        ]
        # Chains recomputed from the merged event set: order-insensitive.
        chains: List[dict] = []
        for kind, value in chain_keys:
            evs = sorted(
                (e for e in events.values() if e.correlation.get(kind) == value),
                key=lambda e: (e.ts, e.event_id),
            )
            services: List[str] = []
            for ev in evs:
                if ev.service not in services:
                    services.append(ev.service)
            chains.append(
                {"kind": kind, "value": value, "services": services, "event_ids": [e.event_id for e in evs]}
            )
        reachable = reachable_services(self.topology, self.ctx.service)
        note = f"queried={sorted(queried)} reachable={reachable}"
        if failed:
            note += f" failed={sorted(failed)}"
        if late:
            note += f" late={sorted(late)}"
        return AnomalyReport(
            anomalies=anomalies,
            causal_candidates=causal,
            trace_chains=chains,
            coverage_note=note,
            events_by_id=events,
        )


def _matches_pattern(message: str, alert_type: str) -> bool:
    tokens = [t for t in alert_type.lower().replace("-", " ").replace("_", " ").split() if t]
    msg = message.lower()
    return bool(tokens) and all(t in msg for t in tokens)


class LogAgent:
    def __init__(
        self,
        store: TelemetryStore,
        runtime: Runtime,
        topology: Optional[Dict[str, List[str]]] = None,
        lookback_s: int = DEFAULT_LOOKBACK_S,
        lookahead_s: int = DEFAULT_LOOKAHEAD_S,
        window_overrides: Optional[Dict[str, Tuple[int, int]]] = None,
    ):
        self.store = store
        self.runtime = runtime
        self.topology = topology or {}
        self.lookback_s = lookback_s
        self.lookahead_s = lookahead_s
        self.window_overrides = window_overrides or {}

    def extract_metadata(self, alert: Alert, incident_id: str) -> AlertContext:
        identifiers = dict(alert.correlation)
        for key, value in alert.payload.items():
            canon = key.strip().lower().replace("-", "_")
            if canon in IDENTIFIER_KEYS and isinstance(value, (str, int)):
                identifiers.setdefault(_canonical_identifier(canon), str(value))
        lookback, lookahead = self.window_overrides.get(
            alert.alert_type, (self.lookback_s, self.lookahead_s)
        )
        return AlertContext(
            incident_id=incident_id,
            service=alert.service,
            alert_type=alert.alert_type,
            fired_at=alert.fired_at,
            identifiers=identifiers,
            window_start=alert.fired_at - lookback * 1000,
            window_end=alert.fired_at + lookahead * 1000,
        )

    def build_queries(self, ctx: AlertContext) -> List[LogQuery]:
        queries = [
            LogQuery(
                start_ms=ctx.window_start,
                end_ms=ctx.window_end,
                services={ctx.service},
                min_level=LogLevel.ERROR,
                limit=DEFAULT_QUERY_LIMIT,
            )
        ]
        for kind in sorted(ctx.identifiers):
            queries.append(
                LogQuery(
                    start_ms=ctx.window_start,
                    end_ms=ctx.window_end,
                    correlation_kind=kind,
                    correlation_value=ctx.identifiers[kind],
                    limit=DEFAULT_QUERY_LIMIT,
                )
            )
        return queries

    def collect_into(self, ctx: AlertContext, builder: ReportBuilder) -> None:
        """Run the scoped queries plus one trace per identifier, with
        throttle backoff; retrieval failures degrade coverage, never abort."""
        for q in self.build_queries(ctx):
            svc = next(iter(q.services)) if q.services else None
            try:
                events = with_backoff(self.runtime, self.store.query, q)
                builder.add_events(events, queried_service=svc)
            except LogRetrievalUnavailable as exc:
                builder.note_failure(svc or f"correlation:{q.correlation_kind}", str(exc))
        for kind in sorted(ctx.identifiers):
            try:
                chain = with_backoff(
                    self.runtime,
                    self.store.trace_correlation,
                    kind,
                    ctx.identifiers[kind],
                    ctx.window_start,
                    ctx.window_end,
                )
                builder.add_chain(chain)
            except LogRetrievalUnavailable as exc:
                builder.note_failure(f"trace:{kind}", str(exc))

    def collect_and_correlate(self, ctx: AlertContext) -> AnomalyReport:
        builder = self.new_builder(ctx)
        self.collect_into(ctx, builder)
        return builder.finalize()

    def new_builder(self, ctx: AlertContext) -> ReportBuilder:
        return ReportBuilder(ctx, self.topology)

    def fetch_service_window(self, ctx: AlertContext, service: str) -> List[LogEvent]:
        """Downstream fetch: full window slice for one service."""
        q = LogQuery(
            start_ms=ctx.window_start,
            end_ms=ctx.window_end,
            services={service},
            limit=DEFAULT_QUERY_LIMIT,
        )
        return with_backoff(self.runtime, self.store.query, q)


def _canonical_identifier(canon_key: str) -> str:
    aliases = {"sessionid": "session_id", "requestid": "request_id", "traceid": "trace_id"}
    return aliases.get(canon_key, canon_key)


def report_facts(ctx: AlertContext, report: AnomalyReport) -> Dict[str, object]:
    """Deterministic fact sheet handed to the reasoner as a context block."""
    facts: Dict[str, object] = {
        "service": ctx.service,
        "alert_type": ctx.alert_type,
        "anomaly_count": len(report.anomalies),
        "causal_count": len(report.causal_candidates),
        "has_evidence": bool(report.anomalies),
        "trace_services": " ".join(
            sorted({s for ch in report.trace_chains for s in ch["services"]})
        ),
    }
    if report.causal_candidates:
        top_id = report.causal_candidates[0]["event_id"]
        top = report.events_by_id[top_id]
        facts["top_event_id"] = top_id
        facts["top_service"] = top.service
        facts["top_message"] = top.message
        facts["top_ts"] = top.ts
        for k, v in sorted(top.fields.items()):
            facts.setdefault(k, v)
    return facts
