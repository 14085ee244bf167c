"""Triage-efficiency metrics over incident sets and the comparison report.

MTTI anchors on the summary's production time, not notification delivery.
Incidents without a summary are excluded from MTTI, count as responsiveness
misses, and count as localization non-matches. Percentages render truncated
to one decimal (66/72 -> 91.6%).
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

from .errors import EmptySteps, MissingGroundTruth, NoSummarizedIncidents
from .gateway import IncidentRecord

AR_THRESHOLD_MINUTES = 5.0


def _delta_minutes(rec: IncidentRecord) -> Optional[float]:
    if rec.summary is None:
        return None
    return (rec.summary.produced_at - rec.first_alert.fired_at) / 60000.0


def compute_mtti(incidents: List[IncidentRecord]) -> float:
    """Mean minutes from first alert to summary production, summarized only."""
    deltas = [d for d in (_delta_minutes(r) for r in incidents) if d is not None]
    if not deltas:
        raise NoSummarizedIncidents("no incident in the cohort carries a summary")
    return sum(deltas) / len(deltas)


def mtti_per_incident(incidents: List[IncidentRecord]) -> Dict[str, float]:
    return {
        r.incident_id: d for r in incidents if (d := _delta_minutes(r)) is not None
    }


def _normalize_label(label: str) -> str:
    return label.strip().casefold()


def compute_ela(incidents: List[IncidentRecord], ground_truth: Dict[str, str]) -> float:
    """Fraction whose predicted fault component matches the verified root
    cause (normalized equality); unsummarized incidents are non-matches."""
    if not incidents:
        return 0.0
    matches = 0
    for rec in incidents:
        if rec.incident_id not in ground_truth:
            raise MissingGroundTruth(f"no verified root cause for {rec.incident_id}")
        if rec.summary is None:
            continue
        if _normalize_label(rec.summary.fault_component) == _normalize_label(ground_truth[rec.incident_id]):
            matches += 1
    return matches / len(incidents)


def compute_eer(incidents: List[IncidentRecord]) -> float:
    """Mean over incidents of automated steps / total steps."""
    if not incidents:
        raise EmptySteps("empty cohort")
    ratios = []
    for rec in incidents:
        steps = rec.triage_steps
        if not steps:
            raise EmptySteps(f"incident {rec.incident_id} carries no triage steps")
        ratios.append(sum(1 for s in steps if s["automated"]) / len(steps))
    return sum(ratios) / len(ratios)


def compute_ar(incidents: List[IncidentRecord], threshold_minutes: float = AR_THRESHOLD_MINUTES) -> float:
    """Fraction of the whole cohort with a summary within the threshold."""
    if not incidents:
        return 0.0
    hits = 0
    for rec in incidents:
        d = _delta_minutes(rec)
        if d is not None and d <= threshold_minutes:
            hits += 1
    return hits / len(incidents)


@dataclass
class MetricsReport:
    cohort: str
    n_alerts: int
    mtti_minutes: Optional[float]
    ela: Optional[float]
    eer: Optional[float]
    ar: float
    mtti_by_incident: Dict[str, float] = field(default_factory=dict)
    notes: List[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "cohort": self.cohort,
            "n_alerts": self.n_alerts,
            "mtti_minutes": self.mtti_minutes,
            "ela": self.ela,
            "eer": self.eer,
            "ar": self.ar,
            "notes": list(self.notes),
        }


def build_report(
    cohort: str,
    incidents: List[IncidentRecord],
    ground_truth: Optional[Dict[str, str]] = None,
    eer_override: Optional[float] = None,
    with_eer: bool = True,
) -> MetricsReport:
    notes: List[str] = []
    unsummarized = [r.incident_id for r in incidents if r.summary is None]
    if unsummarized:
        notes.append(f"{len(unsummarized)} incident(s) without a summary")
    try:
        mtti = compute_mtti(incidents)
    except NoSummarizedIncidents:
        mtti = None
        notes.append("MTTI undefined: no summarized incidents")
    ela = compute_ela(incidents, ground_truth) if ground_truth is not None else None
    if eer_override is not None:
        eer: Optional[float] = eer_override
        notes.append("EER is a configured pass-through value")
    elif with_eer:
        eer = compute_eer(incidents)
    else:
        eer = None
    return MetricsReport(
        cohort=cohort,
        n_alerts=sum(len(r.alerts) for r in incidents),
        mtti_minutes=mtti,
        ela=ela,
        eer=eer,
        ar=compute_ar(incidents),
        mtti_by_incident=mtti_per_incident(incidents),
        notes=notes,
    )


# --------------------------------------------------------------------------
# Rendering
# --------------------------------------------------------------------------

def format_percent(fraction: float) -> str:
    """Truncate to one decimal: 66/72 -> '91.6%'."""
    return f"{math.floor(fraction * 1000) / 10:.1f}%"


def _rows(cohorts: List[MetricsReport]) -> List[List[str]]:
    include_ela = any(c.ela is not None for c in cohorts)
    rows = [["Metric"] + [c.cohort for c in cohorts]]
    rows.append(
        ["MTTI (minutes)"]
        + [f"{c.mtti_minutes:.1f}" if c.mtti_minutes is not None else "N/A" for c in cohorts]
    )
    if include_ela:
        rows.append(["ELA"] + [format_percent(c.ela) if c.ela is not None else "N/A" for c in cohorts])
    rows.append(["EER"] + [format_percent(c.eer) if c.eer is not None else "N/A" for c in cohorts])
    rows.append(["AR"] + [format_percent(c.ar) for c in cohorts])
    return rows


def render_report(cohorts: List[MetricsReport], fmt: str = "table") -> str:
    if not cohorts:
        raise EmptySteps("render_report needs at least one cohort")
    rows = _rows(cohorts)
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, quoting=csv.QUOTE_MINIMAL, lineterminator="\r\n")
        writer.writerows(rows)
        return buf.getvalue()
    if fmt == "json":
        return json.dumps([c.to_json() for c in cohorts], indent=2, sort_keys=True)
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = []
    for i, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(widths[j]) for j, cell in enumerate(row)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * widths[j] for j in range(len(row))))
    return "\n".join(lines)
