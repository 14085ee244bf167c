"""Operator-facing HTTP API served by the orchestrator in serve mode.

Endpoints:
  POST /alerts                    202 {"incident_id"} | 400 {"error", "detail"}
  GET  /incidents?state=STATE     incident rows
  GET  /incidents/{id}            full record with timeline
  GET  /incidents/{id}/trace      reasoning trace
  GET  /approvals?state=PENDING   approval queue (oldest first)
  POST /approvals/{id}            {"decision": "approved"|"denied", "actor"}
  GET  /healthz                   {"status": "ok"}
"""

from __future__ import annotations

import json
import logging
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional, Tuple
from urllib.parse import parse_qs, urlparse

from .actions import Decision
from .errors import (
    AlreadyDecided,
    ArgSchemaViolation,
    MalformedPayload,
    SchemaViolation,
    UnknownApproval,
    UnknownSeverity,
)
from .gateway import IncidentState
from .orchestrator import TriageEngine

logger = logging.getLogger(__name__)


def _incident_row(rec) -> dict:
    return {
        "incident_id": rec.incident_id,
        "service": rec.service,
        "alert_type": rec.alert_type,
        "severity": rec.first_alert.severity.value,
        "state": rec.state.value,
        "fired_at": rec.first_alert.fired_at,
        "alert_count": len(rec.alerts),
        "reflection_cycles_used": rec.reflection_cycles_used,
        "uncertainty_tag": (
            rec.summary.uncertainty_tag.value
            if rec.summary is not None and rec.summary.uncertainty_tag is not None
            else None
        ),
    }


class ApiHandler(BaseHTTPRequestHandler):
    server_version = "opstriage"
    engine: TriageEngine  # injected via server attribute

    def log_message(self, fmt, *args):  # route through logging, not stderr
        logger.debug("http: " + fmt, *args)

    @property
    def _engine(self) -> TriageEngine:
        return self.server.engine  # type: ignore[attr-defined]

    def _send(self, status: int, body: dict) -> None:
        data = json.dumps(body).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.end_headers()
        self.wfile.write(data)

    def _read_body(self) -> bytes:
        length = int(self.headers.get("Content-Length", "0") or 0)
        return self.rfile.read(length) if length else b""

    def do_OPTIONS(self):  # CORS preflight for the console
        self._send(204, {})

    def do_GET(self):
        url = urlparse(self.path)
        params = parse_qs(url.query)
        if url.path == "/healthz":
            self._send(200, {"status": "ok"})
            return
        if url.path == "/incidents":
            state = params.get("state", [None])[0]
            recs = self._engine.incidents.all()
            if state:
                try:
                    wanted = IncidentState(state.upper())
                except ValueError:
                    self._send(400, {"error": "InvalidState", "detail": state})
                    return
                recs = [r for r in recs if r.state == wanted]
            recs.sort(key=lambda r: (r.first_alert.fired_at, r.incident_id))
            self._send(200, {"incidents": [_incident_row(r) for r in recs]})
            return
        m = re.fullmatch(r"/incidents/([^/]+)", url.path)
        if m:
            rec = self._engine.incidents.get(m.group(1))
            if rec is None:
                self._send(404, {"error": "NotFound", "detail": m.group(1)})
                return
            self._send(200, rec.to_json())
            return
        m = re.fullmatch(r"/incidents/([^/]+)/trace", url.path)
        if m:
            rec = self._engine.incidents.get(m.group(1))
            if rec is None:
                self._send(404, {"error": "NotFound", "detail": m.group(1)})
                return
            self._send(200, self._engine.trace_for(m.group(1)).to_json())
            return
        if url.path == "/approvals":
            state = params.get("state", ["PENDING"])[0].upper()
            if state == "PENDING":
                reqs = self._engine.actions.pending_approvals()
            else:
                reqs = [r for r in self._engine.actions.all_approvals() if r.decision.value == state]
            self._send(200, {"approvals": [r.to_json() for r in reqs]})
            return
        self._send(404, {"error": "NotFound", "detail": url.path})

    def do_POST(self):
        url = urlparse(self.path)
        if url.path == "/alerts":
            try:
                alert = self._engine.gateway.ingest_alert(self._read_body())
                incident_id = self._engine.handle_alert(alert)
            except MalformedPayload as exc:
                self._send(400, {"error": "MalformedPayload", "detail": str(exc)})
                return
            except SchemaViolation as exc:
                self._send(400, {"error": "SchemaViolation", "detail": str(exc)})
                return
            except UnknownSeverity as exc:
                self._send(400, {"error": "UnknownSeverity", "detail": str(exc)})
                return
            self._send(202, {"incident_id": incident_id})
            return
        m = re.fullmatch(r"/approvals/([^/]+)", url.path)
        if m:
            try:
                body = json.loads(self._read_body() or b"{}")
                decision_raw = str(body.get("decision", "")).lower()
                actor = str(body.get("actor", "")).strip()
                if decision_raw not in ("approved", "denied"):
                    raise ArgSchemaViolation(f"decision must be approved|denied, got {decision_raw!r}")
                if not actor:
                    raise ArgSchemaViolation("actor is required")
                decision = Decision.APPROVED if decision_raw == "approved" else Decision.DENIED
                result = self._engine.actions.resolve_approval(m.group(1), decision, actor)
            except ValueError as exc:
                self._send(400, {"error": "MalformedPayload", "detail": str(exc)})
                return
            except ArgSchemaViolation as exc:
                self._send(400, {"error": "ArgSchemaViolation", "detail": str(exc)})
                return
            except UnknownApproval as exc:
                self._send(404, {"error": "UnknownApproval", "detail": str(exc)})
                return
            except AlreadyDecided as exc:
                self._send(409, {"error": "AlreadyDecided", "detail": str(exc)})
                return
            self._send(200, {"approval_id": m.group(1), "result": result.to_json()})
            return
        self._send(404, {"error": "NotFound", "detail": url.path})


class ApiServer:
    def __init__(self, engine: TriageEngine, host: str = "127.0.0.1", port: int = 0):
        self._httpd = ThreadingHTTPServer((host, port), ApiHandler)
        self._httpd.engine = engine  # type: ignore[attr-defined]
        self._thread: Optional[threading.Thread] = None

    @property
    def address(self) -> Tuple[str, int]:
        return self._httpd.server_address[0], self._httpd.server_address[1]

    def start_background(self) -> None:
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()

    def serve_forever(self) -> None:
        self._httpd.serve_forever()

    def shutdown(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
