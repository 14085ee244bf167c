// Pure state -> HTML renderers. Everything shown comes from the polled API
// payloads; nothing is fabricated client-side.

import { Approval, IncidentRow, TraceEntry } from './api.js';
import { ConsoleState } from './state.js';

export function escapeHtml(raw: unknown): string {
  return String(raw)
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;');
}

export function formatAge(nowMs: number, thenMs: number): string {
  const seconds = Math.max(0, Math.floor((nowMs - thenMs) / 1000));
  if (seconds < 90) return `${seconds}s`;
  const minutes = Math.floor(seconds / 60);
  if (minutes < 90) return `${minutes}m`;
  return `${Math.floor(minutes / 60)}h${minutes % 60}m`;
}

export function renderBanner(state: ConsoleState): string {
  if (!state.stale) return '';
  return `<div class="banner stale" role="alert">server unreachable; showing last snapshot` +
    (state.lastError ? ` <span class="detail">(${escapeHtml(state.lastError)})</span>` : '') +
    `</div>`;
}

function stateBadge(row: IncidentRow): string {
  const tag = row.uncertainty_tag
    ? ` <span class="badge uncertainty" title="finalized at the reflection limit">${escapeHtml(row.uncertainty_tag)}</span>`
    : '';
  return `<span class="state state-${row.state.toLowerCase()}">${escapeHtml(row.state)}</span>${tag}`;
}

export function renderIncidentRows(state: ConsoleState, nowMs: number): string {
  if (state.rows.length === 0) {
    return `<tr><td colspan="6" class="empty">no incidents yet</td></tr>`;
  }
  return state.rows
    .map((row) => {
      const selected = state.selected?.id === row.incident_id ? ' selected' : '';
      return (
        `<tr class="incident-row${selected}" data-incident="${escapeHtml(row.incident_id)}">` +
        `<td>${escapeHtml(row.incident_id)}</td>` +
        `<td>${escapeHtml(row.service)}</td>` +
        `<td>${escapeHtml(row.alert_type)}</td>` +
        `<td>${stateBadge(row)}</td>` +
        `<td>${formatAge(nowMs, row.fired_at)}</td>` +
        `<td>${row.alert_count}</td>` +
        `</tr>`
      );
    })
    .join('');
}

function renderTimeline(timeline: [string, number][]): string {
  return timeline
    .map(([phase, ts]) => `<li><span class="phase">${escapeHtml(phase)}</span> @ ${new Date(ts).toISOString()}</li>`)
    .join('');
}

function renderFindings(findings: Record<string, string>): string {
  const keys = Object.keys(findings).sort();
  if (keys.length === 0) return '<p class="empty">no findings recorded</p>';
  return (
    '<dl class="findings">' +
    keys.map((k) => `<dt>${escapeHtml(k)}</dt><dd>${escapeHtml(findings[k])}</dd>`).join('') +
    '</dl>'
  );
}

export function renderTrace(entries: TraceEntry[]): string {
  if (entries.length === 0) {
    return '<p class="empty">no entries yet</p>';
  }
  const rows = entries
    .map((entry) => {
      const step = entry.step_id ? ` <span class="step">[${escapeHtml(entry.step_id)}]</span>` : '';
      return (
        `<li class="trace trace-${entry.kind.toLowerCase()}">` +
        `<span class="kind">${escapeHtml(entry.kind)}</span>${step} ` +
        `<span class="text">${escapeHtml(entry.text)}</span>` +
        `</li>`
      );
    })
    .join('');
  return `<ol class="trace-list">${rows}</ol>`;
}

export function renderDetail(state: ConsoleState): string {
  if (state.selectedMissing) {
    return '<p class="empty">incident not found</p>';
  }
  if (!state.selected) {
    return '<p class="empty">select an incident</p>';
  }
  const { detail, trace } = state.selected;
  const summary = detail.summary;
  const summaryHtml = summary
    ? `<h3>${escapeHtml(summary.headline)}</h3>` +
      (summary.uncertainty_tag
        ? `<p><span class="badge uncertainty">${escapeHtml(summary.uncertainty_tag)}</span></p>`
        : '') +
      renderFindings(summary.findings) +
      `<p class="recommendation">Recommended: ${escapeHtml(summary.recommended_action)}</p>`
    : detail.failure_reason
      ? `<p class="failure">failed: ${escapeHtml(detail.failure_reason)}</p>`
      : '<p class="empty">no summary yet</p>';
  return (
    `<h2>${escapeHtml(detail.incident_id)} <small>${escapeHtml(detail.service)} / ${escapeHtml(detail.alert_type)}</small></h2>` +
    `<section class="summary">${summaryHtml}</section>` +
    `<section class="timeline"><h3>Timeline</h3><ul>${renderTimeline(detail.phase_timeline)}</ul></section>` +
    `<section class="trace-pane"><h3>Reasoning trace</h3>${renderTrace(trace)}</section>`
  );
}

export function renderApprovals(state: ConsoleState, nowMs: number): string {
  if (state.approvals.length === 0) {
    return '<p class="empty">no pending approvals</p>';
  }
  return state.approvals
    .map((approval: Approval) => {
      const note = state.approvalNotes[approval.approval_id];
      return (
        `<div class="approval" data-approval="${escapeHtml(approval.approval_id)}">` +
        `<div class="approval-head"><strong>${escapeHtml(approval.tool)}</strong> ` +
        `for ${escapeHtml(approval.incident_id)} ` +
        `<span class="age">${formatAge(nowMs, approval.requested_at)} old</span></div>` +
        `<code class="args">${escapeHtml(JSON.stringify(approval.args))}</code>` +
        `<div class="approval-actions">` +
        `<button class="approve" data-decision="approved" data-approval="${escapeHtml(approval.approval_id)}">Approve</button>` +
        `<button class="deny" data-decision="denied" data-approval="${escapeHtml(approval.approval_id)}">Deny</button>` +
        (note ? `<span class="note">${escapeHtml(note)}</span>` : '') +
        `</div></div>`
      );
    })
    .join('');
}
