import { describe, expect, it, vi } from 'vitest';

import { ApiClient, ApiError } from '../src/api.js';

function jsonResponse(body: unknown, status = 200): () => Promise<Response> {
  // a fresh Response per call: bodies are single-read
  return async () =>
    new Response(JSON.stringify(body), {
      status,
      headers: { 'Content-Type': 'application/json' },
    });
}

describe('ApiClient', () => {
  it('fetches incident rows with an optional state filter', async () => {
    const fetchFn = vi.fn().mockImplementation(jsonResponse({ incidents: [{ incident_id: 'INC-1' }] }));
    const client = new ApiClient('http://host', fetchFn as unknown as typeof fetch);
    const rows = await client.getIncidents('CLOSED');
    expect(rows[0].incident_id).toBe('INC-1');
    expect(fetchFn).toHaveBeenCalledWith('http://host/incidents?state=CLOSED');
    await client.getIncidents();
    expect(fetchFn).toHaveBeenLastCalledWith('http://host/incidents');
  });

  it('posts approval decisions with actor and decision', async () => {
    const fetchFn = vi.fn().mockImplementation(jsonResponse({ result: { status: 'OK' } }));
    const client = new ApiClient('http://host', fetchFn as unknown as typeof fetch);
    const result = await client.decideApproval('APR-000001', 'approved', 'casey');
    expect(result.status).toBe('OK');
    const [url, init] = fetchFn.mock.calls[0];
    expect(url).toBe('http://host/approvals/APR-000001');
    expect(init.method).toBe('POST');
    expect(JSON.parse(init.body)).toEqual({ decision: 'approved', actor: 'casey' });
  });

  it('raises typed errors carrying the server error code', async () => {
    const fetchFn = vi
      .fn()
      .mockImplementation(jsonResponse({ error: 'AlreadyDecided', detail: 'nope' }, 409));
    const client = new ApiClient('http://host', fetchFn as unknown as typeof fetch);
    await expect(client.decideApproval('APR-1', 'denied', 'casey')).rejects.toMatchObject({
      code: 'AlreadyDecided',
      status: 409,
    });
  });

  it('maps 404 to NotFound errors', async () => {
    const fetchFn = vi.fn().mockImplementation(jsonResponse({ error: 'NotFound', detail: 'x' }, 404));
    const client = new ApiClient('http://host', fetchFn as unknown as typeof fetch);
    try {
      await client.getIncident('INC-404');
      expect.unreachable();
    } catch (err) {
      expect(err).toBeInstanceOf(ApiError);
      expect((err as ApiError).status).toBe(404);
    }
  });

  it('health() is false on transport failure', async () => {
    const fetchFn = vi.fn().mockRejectedValue(new Error('ECONNREFUSED'));
    const client = new ApiClient('http://host', fetchFn as unknown as typeof fetch);
    expect(await client.health()).toBe(false);
  });
});
