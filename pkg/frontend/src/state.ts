// Console view model. Polling is coalesced (at most one request cycle in
// flight); a failed poll raises the stale banner but keeps the last good
// snapshot. Pending approvals are kept oldest-first.

import { ApiClient, ApiError, Approval, IncidentDetail, IncidentRow, TraceEntry } from './api.js';

export interface SelectedIncident {
  id: string;
  detail: IncidentDetail;
  trace: TraceEntry[];
}

export interface ConsoleState {
  rows: IncidentRow[];
  approvals: Approval[];
  stale: boolean;
  lastError: string | null;
  selected: SelectedIncident | null;
  selectedMissing: boolean;
  actor: string;
  approvalNotes: Record<string, string>; // approval_id -> inline message
  lastPollAt: number | null;
}

export function initialState(): ConsoleState {
  return {
    rows: [],
    approvals: [],
    stale: false,
    lastError: null,
    selected: null,
    selectedMissing: false,
    actor: '',
    approvalNotes: {},
    lastPollAt: null,
  };
}

export class ConsoleStore {
  state: ConsoleState = initialState();
  private pollInFlight = false;

  constructor(private client: ApiClient, private now: () => number = Date.now) {}

  /** One poll cycle; overlapping calls coalesce to a single in-flight cycle. */
  async pollOnce(): Promise<boolean> {
    if (this.pollInFlight) return false;
    this.pollInFlight = true;
    try {
      const [rows, approvals] = await Promise.all([
        this.client.getIncidents(),
        this.client.getPendingApprovals(),
      ]);
      this.state.rows = [...rows].sort((a, b) => b.fired_at - a.fired_at || cmp(a.incident_id, b.incident_id));
      this.state.approvals = [...approvals].sort(
        (a, b) => a.requested_at - b.requested_at || cmp(a.approval_id, b.approval_id),
      );
      this.state.stale = false;
      this.state.lastError = null;
      this.state.lastPollAt = this.now();
      if (this.state.selected) {
        await this.refreshSelected(this.state.selected.id);
      }
      return true;
    } catch (err) {
      this.state.stale = true; // keep the previous snapshot on screen
      this.state.lastError = String(err instanceof Error ? err.message : err);
      return false;
    } finally {
      this.pollInFlight = false;
    }
  }

  async selectIncident(id: string): Promise<void> {
    await this.refreshSelected(id);
  }

  private async refreshSelected(id: string): Promise<void> {
    try {
      const [detail, trace] = await Promise.all([
        this.client.getIncident(id),
        this.client.getTrace(id),
      ]);
      this.state.selected = { id, detail, trace };
      this.state.selectedMissing = false;
    } catch (err) {
      if (err instanceof ApiError && err.status === 404) {
        this.state.selected = null;
        this.state.selectedMissing = true;
        return;
      }
      throw err;
    }
  }

  clearSelection(): void {
    this.state.selected = null;
    this.state.selectedMissing = false;
  }

  setActor(actor: string): void {
    this.state.actor = actor;
  }

  /** Approve/deny; on success the row leaves the queue. AlreadyDecided (or a
   * missing actor) surfaces inline next to the approval row. */
  async decide(approvalId: string, decision: 'approved' | 'denied'): Promise<boolean> {
    const actor = this.state.actor.trim();
    if (!actor) {
      this.state.approvalNotes[approvalId] = 'enter an actor name first';
      return false;
    }
    try {
      await this.client.decideApproval(approvalId, decision, actor);
      this.state.approvals = this.state.approvals.filter((a) => a.approval_id !== approvalId);
      delete this.state.approvalNotes[approvalId];
      return true;
    } catch (err) {
      if (err instanceof ApiError && err.code === 'AlreadyDecided') {
        this.state.approvalNotes[approvalId] = 'already decided by someone else';
        this.state.approvals = this.state.approvals.filter((a) => a.approval_id !== approvalId);
        return false;
      }
      this.state.approvalNotes[approvalId] =
        err instanceof ApiError ? err.message : 'request failed, retry';
      return false;
    }
  }
}

function cmp(a: string, b: string): number {
  return a < b ? -1 : a > b ? 1 : 0;
}
