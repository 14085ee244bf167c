"""Alert ingestion: wire validation, deduplication, and incident opening.

Dedup decisions for the same (service, alert_type) key are serialized through
the incident store lock so concurrent deliveries cannot double-open. Incident
records are owned by exactly one workflow after opening.
"""

from __future__ import annotations

import json
import logging
import random
import threading
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from typing import Dict, List, Optional, Tuple

from .errors import MalformedPayload, SchemaViolation, StorageFailure, UnknownSeverity

logger = logging.getLogger(__name__)


class Severity(str, Enum):
    INFO = "INFO"
    WARN = "WARN"
    ERROR = "ERROR"
    CRITICAL = "CRITICAL"


class IncidentState(str, Enum):
    RECEIVED = "RECEIVED"
    LOG_RETRIEVAL = "LOG_RETRIEVAL"
    PLANNING = "PLANNING"
    EXECUTING = "EXECUTING"
    REFLECTING = "REFLECTING"
    SUMMARIZED = "SUMMARIZED"
    NOTIFIED = "NOTIFIED"
    CLOSED = "CLOSED"
    FAILED = "FAILED"


TERMINAL_STATES = {IncidentState.CLOSED, IncidentState.FAILED}

# Legal transitions; any state may additionally move to FAILED.
LEGAL_TRANSITIONS = {
    (IncidentState.RECEIVED, IncidentState.LOG_RETRIEVAL),
    (IncidentState.LOG_RETRIEVAL, IncidentState.PLANNING),
    (IncidentState.PLANNING, IncidentState.EXECUTING),
    (IncidentState.EXECUTING, IncidentState.REFLECTING),
    (IncidentState.REFLECTING, IncidentState.PLANNING),
    (IncidentState.REFLECTING, IncidentState.SUMMARIZED),
    (IncidentState.SUMMARIZED, IncidentState.NOTIFIED),
    (IncidentState.NOTIFIED, IncidentState.CLOSED),
}


def is_legal_transition(a: IncidentState, b: IncidentState) -> bool:
    return b == IncidentState.FAILED or (a, b) in LEGAL_TRANSITIONS


@dataclass
class Alert:
    alert_id: str
    service: str
    alert_type: str
    severity: Severity
    fired_at: int  # epoch-ms
    monitor: str = ""
    correlation: Dict[str, str] = field(default_factory=dict)
    payload: Dict[str, object] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "alert_id": self.alert_id,
            "service": self.service,
            "alert_type": self.alert_type,
            "severity": self.severity.value,
            "fired_at": self.fired_at,
            "monitor": self.monitor,
            "correlation": dict(sorted(self.correlation.items())),
            "payload": self.payload,
        }


class DedupMode(str, Enum):
    INDEPENDENT = "INDEPENDENT"
    WINDOWED = "WINDOWED"


DEFAULT_WINDOW_SECONDS = 300


@dataclass
class DedupPolicy:
    """Per alert_type dedup rule; unlisted types fall back to the default."""

    modes: Dict[str, DedupMode] = field(default_factory=dict)
    windows: Dict[str, int] = field(default_factory=dict)  # seconds, WINDOWED only
    default_mode: DedupMode = DedupMode.WINDOWED
    default_window_seconds: int = DEFAULT_WINDOW_SECONDS

    def mode_for(self, alert_type: str) -> DedupMode:
        return self.modes.get(alert_type, self.default_mode)

    def window_for(self, alert_type: str) -> int:
        return self.windows.get(alert_type, self.default_window_seconds)

    @classmethod
    def from_json(cls, obj: dict) -> "DedupPolicy":
        pol = cls()
        for alert_type, entry in (obj or {}).items():
            if alert_type == "_default":
                pol.default_mode = DedupMode(entry.get("mode", "WINDOWED"))
                pol.default_window_seconds = int(entry.get("window_seconds", DEFAULT_WINDOW_SECONDS))
                continue
            pol.modes[alert_type] = DedupMode(entry.get("mode", "WINDOWED"))
            if "window_seconds" in entry:
                pol.windows[alert_type] = int(entry["window_seconds"])
        return pol


@dataclass
class IncidentRecord:
    incident_id: str
    alerts: List[Alert]
    state: IncidentState = IncidentState.RECEIVED
    phase_timeline: List[Tuple[str, int]] = field(default_factory=list)  # (state, entered_at ms)
    summary: Optional["object"] = None  # DiagnosticSummary, set at SUMMARIZED
    verified_root_cause: Optional[str] = None
    reflection_cycles_used: int = 0
    triage_steps: List[dict] = field(default_factory=list)  # cost-model steps for effort metrics
    failure_reason: Optional[str] = None
    notification: Optional[dict] = None
    anomaly_report: Optional[dict] = None  # canonical report body
    plan: Optional[dict] = None  # final plan snapshot with step outcomes
    coverage_note: str = ""

    @property
    def first_alert(self) -> Alert:
        return self.alerts[0]

    @property
    def service(self) -> str:
        return self.first_alert.service

    @property
    def alert_type(self) -> str:
        return self.first_alert.alert_type

    def enter_state(self, state: IncidentState, now_ms: int) -> None:
        if self.phase_timeline:
            now_ms = max(now_ms, self.phase_timeline[-1][1])
        self.state = state
        self.phase_timeline.append((state.value, now_ms))

    def to_json(self) -> dict:
        return {
            "incident_id": self.incident_id,
            "alert_ids": [a.alert_id for a in self.alerts],
            "service": self.service,
            "alert_type": self.alert_type,
            "severity": self.first_alert.severity.value,
            "fired_at": self.first_alert.fired_at,
            "state": self.state.value,
            "phase_timeline": [[s, t] for s, t in self.phase_timeline],
            "summary": self.summary.to_json() if self.summary is not None else None,
            "verified_root_cause": self.verified_root_cause,
            "reflection_cycles_used": self.reflection_cycles_used,
            "triage_steps": self.triage_steps,
            "failure_reason": self.failure_reason,
            "notification": self.notification,
            "anomaly_report": self.anomaly_report,
            "plan": self.plan,
            "coverage_note": self.coverage_note,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "IncidentRecord":
        """Rebuild a record from an incidents-file line. Attached alerts are
        reconstructed as stubs: only the first alert's timing is persisted."""
        from .planner import DiagnosticSummary  # cycle-free at runtime

        alerts = [
            Alert(
                alert_id=aid,
                service=obj["service"],
                alert_type=obj["alert_type"],
                severity=Severity(obj.get("severity", "WARN")),
                fired_at=int(obj["fired_at"]),
            )
            for aid in obj["alert_ids"]
        ]
        rec = cls(
            incident_id=obj["incident_id"],
            alerts=alerts,
            state=IncidentState(obj["state"]),
            phase_timeline=[(s, int(t)) for s, t in obj.get("phase_timeline", [])],
            verified_root_cause=obj.get("verified_root_cause"),
            reflection_cycles_used=int(obj.get("reflection_cycles_used", 0)),
            triage_steps=list(obj.get("triage_steps", [])),
            failure_reason=obj.get("failure_reason"),
            notification=obj.get("notification"),
            anomaly_report=obj.get("anomaly_report"),
            plan=obj.get("plan"),
            coverage_note=obj.get("coverage_note", ""),
        )
        if obj.get("summary"):
            rec.summary = DiagnosticSummary.from_json(obj["summary"])
        return rec


class IncidentStore:
    """In-memory incident registry; the gateway lock serializes open/attach."""

    def __init__(self) -> None:
        self._incidents: Dict[str, IncidentRecord] = {}
        self._lock = threading.RLock()
        self._counter = 0

    def next_id(self) -> str:
        with self._lock:
            self._counter += 1
            return f"INC-{self._counter:06d}"

    def put(self, rec: IncidentRecord) -> None:
        with self._lock:
            self._incidents[rec.incident_id] = rec

    def get(self, incident_id: str) -> Optional[IncidentRecord]:
        with self._lock:
            return self._incidents.get(incident_id)

    def all(self) -> List[IncidentRecord]:
        with self._lock:
            return list(self._incidents.values())

    def open_incidents(self) -> List[IncidentRecord]:
        with self._lock:
            return [r for r in self._incidents.values() if r.state not in TERMINAL_STATES]

    @property
    def lock(self) -> threading.RLock:
        return self._lock


@dataclass
class DedupDecision:
    kind: str  # "NEW_INCIDENT" | "ATTACH"
    incident_id: Optional[str] = None


def deduplicate(alert: Alert, policy: DedupPolicy, open_incidents: List[IncidentRecord]) -> DedupDecision:
    """Total function: INDEPENDENT always opens; WINDOWED attaches iff an open
    incident shares (service, alert_type) and fired_at falls within the window
    of that incident's first alert."""
    mode = policy.mode_for(alert.alert_type)
    if mode == DedupMode.INDEPENDENT:
        return DedupDecision("NEW_INCIDENT")
    window_ms = policy.window_for(alert.alert_type) * 1000
    for rec in open_incidents:
        first = rec.first_alert
        if first.service == alert.service and first.alert_type == alert.alert_type:
            if 0 <= alert.fired_at - first.fired_at <= window_ms:
                return DedupDecision("ATTACH", incident_id=rec.incident_id)
    return DedupDecision("NEW_INCIDENT")


_CORR_KINDS = ("session_id", "request_id")


def _canon_kind(kind: str) -> str:
    return kind.strip().lower().replace("-", "_")


def parse_fired_at(raw: object) -> int:
    """RFC3339 string or epoch-ms number -> epoch-ms int."""
    if isinstance(raw, bool):
        raise SchemaViolation("fired_at must be a timestamp")
    if isinstance(raw, (int, float)):
        return int(raw)
    if isinstance(raw, str):
        try:
            return int(raw)
        except ValueError:
            pass
        try:
            dt = datetime.fromisoformat(raw.replace("Z", "+00:00"))
            return int(dt.timestamp() * 1000)
        except ValueError as exc:
            raise SchemaViolation(f"fired_at not RFC3339 or epoch-ms: {raw!r}") from exc
    raise SchemaViolation("fired_at must be a timestamp")


class AlertGateway:
    """Validates inbound alerts, applies the dedup policy, opens incidents.

    In replay the payload's fired_at is trusted (determinism); a live gateway
    constructed with a clock stamps fired_at at receipt so sender clock skew
    cannot distort triage-latency accounting.
    """

    def __init__(
        self,
        store: IncidentStore,
        policy: Optional[DedupPolicy] = None,
        id_rng: Optional[random.Random] = None,
        stamp_clock=None,  # callable -> epoch-ms; None trusts payload fired_at
    ):
        self.store = store
        self.policy = policy or DedupPolicy()
        self._id_rng = id_rng or random.Random()
        self._stamp_clock = stamp_clock
        self._seen_alert_ids: Dict[str, str] = {}  # alert_id -> incident_id (idempotency)

    def ingest_alert(self, raw: bytes) -> Alert:
        try:
            obj = json.loads(raw.decode("utf-8") if isinstance(raw, (bytes, bytearray)) else raw)
        except (ValueError, UnicodeDecodeError) as exc:
            raise MalformedPayload(f"unparseable alert payload: {exc}") from exc
        if not isinstance(obj, dict):
            raise MalformedPayload("alert payload must be a JSON object")
        return self.alert_from_json(obj)

    def alert_from_json(self, obj: dict) -> Alert:
        for key in ("service", "alert_type", "fired_at"):
            if key not in obj or obj[key] in (None, ""):
                raise SchemaViolation(f"missing required field {key!r}")
        raw_sev = obj.get("severity")
        if not isinstance(raw_sev, str) or raw_sev.upper() not in Severity.__members__:
            raise UnknownSeverity(f"severity must be one of {sorted(Severity.__members__)}, got {raw_sev!r}")
        fired_at = parse_fired_at(obj["fired_at"])
        if self._stamp_clock is not None:
            fired_at = int(self._stamp_clock())
        monitor = str(obj.get("monitor", ""))
        service = str(obj["service"])
        alert_id = obj.get("alert_id") or self._synthesize_id(monitor, service, fired_at)
        correlation = {
            _canon_kind(k): str(v)
            for k, v in (obj.get("correlation") or {}).items()
            if v not in (None, "")
        }
        payload = obj.get("payload") or {}
        if not isinstance(payload, dict):
            raise SchemaViolation("payload must be an object")
        return Alert(
            alert_id=str(alert_id),
            service=service,
            alert_type=str(obj["alert_type"]),
            severity=Severity(raw_sev.upper()),
            fired_at=fired_at,
            monitor=monitor,
            correlation=correlation,
            payload=payload,
        )

    def _synthesize_id(self, monitor: str, service: str, fired_at: int) -> str:
        suffix = "".join(self._id_rng.choice("0123456789abcdef") for _ in range(8))
        return f"{monitor or 'monitor'}-{service}-{fired_at}-{suffix}"

    def admit(self, alert: Alert, now_ms: int) -> Tuple[IncidentRecord, bool]:
        """Dedup + open/attach under the store lock. Returns (record, opened)."""
        with self.store.lock:
            if alert.alert_id in self._seen_alert_ids:
                rec = self.store.get(self._seen_alert_ids[alert.alert_id])
                if rec is not None:
                    return rec, False
            decision = deduplicate(alert, self.policy, self.store.open_incidents())
            if decision.kind == "ATTACH":
                rec = self.store.get(decision.incident_id)
                if rec is None:
                    raise StorageFailure(f"dedup target {decision.incident_id} vanished")
                rec.alerts.append(alert)
                self._seen_alert_ids[alert.alert_id] = rec.incident_id
                return rec, False
            rec = self.open_incident(alert, now_ms)
            self._seen_alert_ids[alert.alert_id] = rec.incident_id
            return rec, True

    def open_incident(self, alert: Alert, now_ms: int) -> IncidentRecord:
        rec = IncidentRecord(incident_id=self.store.next_id(), alerts=[alert])
        rec.enter_state(IncidentState.RECEIVED, now_ms)
        self.store.put(rec)
        logger.debug("opened incident %s for alert %s", rec.incident_id, alert.alert_id)
        return rec
