"""Embedded, queryable log store with correlation tracing and rate limiting.

Stands in for a hosted log API: structured events, level/time/service
filtering, cross-service identifier tracing, and a token-bucket limiter that
reproduces API throttling. Matching is conjunctive across filters; substring
match is case-sensitive. Results are always ordered by (ts, event_id).
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Set

from .errors import InvalidQuery, LogRetrievalUnavailable, StorageFailure, Throttled
from .runtime import Runtime

MAX_THROTTLE_RETRIES = 10


class LogLevel(str, Enum):
    DEBUG = "DEBUG"
    INFO = "INFO"
    WARN = "WARN"
    ERROR = "ERROR"

    @property
    def rank(self) -> int:
        return _LEVEL_RANK[self]


_LEVEL_RANK = {LogLevel.DEBUG: 0, LogLevel.INFO: 1, LogLevel.WARN: 2, LogLevel.ERROR: 3}


@dataclass(frozen=True)
class LogEvent:
    ts: int  # epoch-ms
    service: str
    level: LogLevel
    message: str
    correlation: Dict[str, str] = field(default_factory=dict)
    fields: Dict[str, str] = field(default_factory=dict)
    event_id: int = -1  # assigned by the store on append

    def body_text(self) -> str:
        """Flat text rendering used for evidence grounding checks."""
        parts = [self.service, self.message]
        parts += [f"{k}={v}" for k, v in sorted(self.fields.items())]
        parts += [f"{k}={v}" for k, v in sorted(self.correlation.items())]
        return " ".join(parts)

    def to_json(self) -> dict:
        return {
            "ts": self.ts,
            "service": self.service,
            "level": self.level.value,
            "message": self.message,
            "correlation": dict(sorted(self.correlation.items())),
            "fields": dict(sorted(self.fields.items())),
            "event_id": self.event_id,
        }


def event_from_json(obj: dict, event_id: int = -1) -> LogEvent:
    return LogEvent(
        ts=int(obj["ts"]),
        service=str(obj["service"]),
        level=LogLevel(obj.get("level", "INFO")),
        message=str(obj.get("message", "")),
        correlation={str(k): str(v) for k, v in (obj.get("correlation") or {}).items()},
        fields={str(k): str(v) for k, v in (obj.get("fields") or {}).items()},
        event_id=int(obj.get("event_id", event_id)),
    )


@dataclass
class LogQuery:
    start_ms: int
    end_ms: int
    services: Optional[Set[str]] = None
    min_level: Optional[LogLevel] = None
    correlation_kind: Optional[str] = None
    correlation_value: Optional[str] = None
    text_match: Optional[str] = None
    limit: int = 1000

    def validate(self) -> None:
        if self.start_ms > self.end_ms:
            raise InvalidQuery(f"start {self.start_ms} > end {self.end_ms}")
        if self.limit < 1:
            raise InvalidQuery(f"limit must be >= 1, got {self.limit}")

    def matches(self, ev: LogEvent) -> bool:
        if not (self.start_ms <= ev.ts <= self.end_ms):
            return False
        if self.services is not None and ev.service not in self.services:
            return False
        if self.min_level is not None and ev.level.rank < self.min_level.rank:
            return False
        if self.correlation_kind is not None:
            if ev.correlation.get(self.correlation_kind) != self.correlation_value:
                return False
        if self.text_match is not None and self.text_match not in ev.message:
            return False
        return True


@dataclass(frozen=True)
class RateLimitConfig:
    capacity: int
    refill_per_s: float

    def validate(self) -> None:
        if self.capacity < 1:
            raise InvalidQuery(f"rate limit capacity must be >= 1, got {self.capacity}")
        if self.refill_per_s <= 0:
            raise InvalidQuery(f"rate limit refill must be > 0, got {self.refill_per_s}")


class RateLimiter:
    """Token bucket with per-caller reservations.

    A refused acquire reserves the next future token and reports retry_after;
    a caller that waits exactly that long is guaranteed a grant on retry, so a
    finite request population never starves regardless of contention.
    """

    def __init__(self, cfg: RateLimitConfig):
        cfg.validate()
        self.cfg = cfg
        self._lock = threading.Lock()
        self._credit = float(cfg.capacity)
        self._last_ms: Optional[int] = None
        self._matured: List[float] = []  # grant times (s) of outstanding reservations

    def acquire(self, now_ms: int) -> None:
        """Grant one permit or raise Throttled(retry_after seconds)."""
        with self._lock:
            self._refill(now_ms)
            now_s = now_ms / 1000.0
            if self._matured and self._matured[0] <= now_s + 1e-9:
                self._matured.pop(0)
                return
            if self._credit >= 1.0 - 1e-12:
                self._credit -= 1.0
                return
            deficit = 1.0 - self._credit
            wait = deficit / self.cfg.refill_per_s
            self._credit -= 1.0  # reserve: future refill repays this debt
            self._matured.append(now_s + wait)
            raise Throttled(retry_after=wait)

    def _refill(self, now_ms: int) -> None:
        if self._last_ms is None:
            self._last_ms = now_ms
            return
        elapsed_s = max(0, now_ms - self._last_ms) / 1000.0
        self._credit = min(float(self.cfg.capacity), self._credit + elapsed_s * self.cfg.refill_per_s)
        self._last_ms = max(self._last_ms, now_ms)


class TelemetryStore:
    """Append-only in-memory event store with optional rate limiting and
    optional file-backed persistence (one JSON event per line, appended as
    events arrive).

    Concurrent readers, serialized appends. When a limiter is configured,
    every query/trace call consumes one permit; throttling changes timing
    only, never results.
    """

    def __init__(
        self,
        runtime: Runtime,
        rate_limit: Optional[RateLimitConfig] = None,
        persist_path: Optional[str] = None,
    ):
        self.runtime = runtime
        self._events: List[LogEvent] = []
        self._lock = threading.RLock()
        self.limiter = RateLimiter(rate_limit) if rate_limit else None
        self._persist_path = persist_path

    # -- ingestion ----------------------------------------------------------

    def append_events(self, events: Sequence[LogEvent]) -> int:
        with self._lock:
            start = len(self._events)
            stored: List[LogEvent] = []
            for i, ev in enumerate(events):
                if not ev.service:
                    raise StorageFailure("event without service")
                stored.append(
                    LogEvent(
                        ts=ev.ts,
                        service=ev.service,
                        level=ev.level,
                        message=ev.message,
                        correlation=dict(ev.correlation),
                        fields=dict(ev.fields),
                        event_id=start + i,
                    )
                )
            self._events.extend(stored)
            if self._persist_path and stored:
                try:
                    with open(self._persist_path, "a", encoding="utf-8") as fh:
                        for ev in stored:
                            fh.write(json.dumps(ev.to_json(), sort_keys=True) + "\n")
                except OSError as exc:
                    raise StorageFailure(f"cannot persist events to {self._persist_path}: {exc}") from exc
            return len(events)

    def load_file(self, path: str) -> int:
        """Load newline-delimited JSON events (`ts` as epoch-ms)."""
        events = []
        try:
            with open(path, "r", encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if line:
                        events.append(event_from_json(json.loads(line)))
        except (OSError, ValueError, KeyError) as exc:
            raise StorageFailure(f"cannot load events from {path}: {exc}") from exc
        return self.append_events(events)

    def __len__(self) -> int:
        with self._lock:
            return len(self._events)

    def snapshot(self) -> List[LogEvent]:
        with self._lock:
            return list(self._events)

    # -- querying -----------------------------------------------------------

    def _permit(self) -> None:
        if self.limiter is not None:
            self.limiter.acquire(self.runtime.now_ms())

    def query(self, q: LogQuery) -> List[LogEvent]:
        q.validate()
        self._permit()
        with self._lock:
            hits = [ev for ev in self._events if q.matches(ev)]
        hits.sort(key=lambda e: (e.ts, e.event_id))
        return hits[: q.limit]

    def trace_correlation(self, kind: str, value: str, start_ms: int, end_ms: int) -> "TraceChain":
        if start_ms > end_ms:
            raise InvalidQuery(f"start {start_ms} > end {end_ms}")
        self._permit()
        with self._lock:
            hits = [
                ev
                for ev in self._events
                if start_ms <= ev.ts <= end_ms and ev.correlation.get(kind) == value
            ]
        hits.sort(key=lambda e: (e.ts, e.event_id))
        chain: List[str] = []
        for ev in hits:
            if ev.service not in chain:
                chain.append(ev.service)
        return TraceChain(kind=kind, value=value, services=chain, events=hits)


@dataclass
class TraceChain:
    kind: str
    value: str
    services: List[str]  # distinct services in first-occurrence (ts) order
    events: List[LogEvent]

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "value": self.value,
            "services": list(self.services),
            "event_ids": [e.event_id for e in self.events],
        }


def with_backoff(runtime: Runtime, fn, *args, **kwargs):
    """Call fn, waiting exactly retry_after on Throttled, up to 10 retries."""
    for _ in range(MAX_THROTTLE_RETRIES + 1):
        try:
            return fn(*args, **kwargs)
        except Throttled as exc:
            runtime.sleep(exc.retry_after)
    raise LogRetrievalUnavailable(f"throttle backoff exhausted after {MAX_THROTTLE_RETRIES} retries")


def write_events_file(path: str, events: Iterable[LogEvent]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for ev in events:
            fh.write(json.dumps(ev.to_json(), sort_keys=True) + "\n")
            n += 1
    return n
