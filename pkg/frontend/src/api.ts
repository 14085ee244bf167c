// Typed client for the orchestrator HTTP API. The console mutates server
// state only through the approvals endpoint.

export interface IncidentRow {
  incident_id: string;
  service: string;
  alert_type: string;
  severity: string;
  state: string;
  fired_at: number;
  alert_count: number;
  reflection_cycles_used: number;
  uncertainty_tag: string | null;
}

export interface SummaryView {
  headline: string;
  fault_component: string;
  findings: Record<string, string>;
  recommended_action: string;
  recommended_tool: string | null;
  produced_at: number;
  uncertainty_tag: string | null;
}

export interface IncidentDetail {
  incident_id: string;
  service: string;
  alert_type: string;
  severity: string;
  state: string;
  fired_at: number;
  alert_ids: string[];
  phase_timeline: [string, number][];
  summary: SummaryView | null;
  coverage_note: string;
  failure_reason: string | null;
}

export interface TraceEntry {
  kind: 'THOUGHT' | 'ACTION' | 'OBSERVATION' | 'REFLECTION';
  text: string;
  ts: number;
  step_id: string | null;
}

export interface Approval {
  approval_id: string;
  incident_id: string;
  tool: string;
  args: Record<string, unknown>;
  risk: string;
  requested_at: number;
  decision: string;
}

export class ApiError extends Error {
  constructor(public code: string, public status: number, detail: string) {
    super(`${code}: ${detail}`);
  }
}

async function asJson<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let code = `HTTP_${response.status}`;
    let detail = response.statusText;
    try {
      const body = await response.json();
      code = body.error ?? code;
      detail = body.detail ?? detail;
    } catch {
      // non-JSON error body; keep the status line
    }
    throw new ApiError(code, response.status, detail);
  }
  return response.json() as Promise<T>;
}

export class ApiClient {
  constructor(private baseUrl: string, private fetchFn: typeof fetch = fetch) {}

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  async getIncidents(state?: string): Promise<IncidentRow[]> {
    const query = state ? `?state=${encodeURIComponent(state)}` : '';
    const body = await asJson<{ incidents: IncidentRow[] }>(
      await this.fetchFn(this.url(`/incidents${query}`)),
    );
    return body.incidents;
  }

  async getIncident(id: string): Promise<IncidentDetail> {
    return asJson<IncidentDetail>(await this.fetchFn(this.url(`/incidents/${id}`)));
  }

  async getTrace(id: string): Promise<TraceEntry[]> {
    const body = await asJson<{ entries: TraceEntry[] }>(
      await this.fetchFn(this.url(`/incidents/${id}/trace`)),
    );
    return body.entries;
  }

  async getPendingApprovals(): Promise<Approval[]> {
    const body = await asJson<{ approvals: Approval[] }>(
      await this.fetchFn(this.url('/approvals?state=PENDING')),
    );
    return body.approvals;
  }

  async decideApproval(
    approvalId: string,
    decision: 'approved' | 'denied',
    actor: string,
  ): Promise<{ status: string }> {
    const body = await asJson<{ result: { status: string } }>(
      await this.fetchFn(this.url(`/approvals/${approvalId}`), {
        method: 'POST',
        headers: { 'Content-Type': 'application/json' },
        body: JSON.stringify({ decision, actor }),
      }),
    );
    return body.result;
  }

  async health(): Promise<boolean> {
    try {
      const body = await asJson<{ status: string }>(await this.fetchFn(this.url('/healthz')));
      return body.status === 'ok';
    } catch {
      return false;
    }
  }
}
