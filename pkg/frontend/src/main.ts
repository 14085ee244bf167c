// DOM wiring: 2s poll loop over the orchestrator API, row selection, and
// approval decisions.

import { ApiClient } from './api.js';
import { renderApprovals, renderBanner, renderDetail, renderIncidentRows } from './render.js';
import { ConsoleStore } from './state.js';

const POLL_INTERVAL_MS = 2000;

const apiBase = (window as { OPSTRIAGE_API?: string }).OPSTRIAGE_API ?? '';
const client = new ApiClient(apiBase);
const store = new ConsoleStore(client);

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function repaint(): void {
  const now = Date.now();
  el('banner').innerHTML = renderBanner(store.state);
  el('incident-rows').innerHTML = renderIncidentRows(store.state, now);
  el('detail').innerHTML = renderDetail(store.state);
  el('approvals').innerHTML = renderApprovals(store.state, now);
}

async function poll(): Promise<void> {
  await store.pollOnce();
  repaint();
}

function wire(): void {
  el('incident-rows').addEventListener('click', (event) => {
    const row = (event.target as HTMLElement).closest<HTMLElement>('[data-incident]');
    if (!row) return;
    void store.selectIncident(row.dataset.incident as string).then(repaint);
  });

  el('approvals').addEventListener('click', (event) => {
    const button = (event.target as HTMLElement).closest<HTMLButtonElement>('button[data-approval]');
    if (!button) return;
    const decision = button.dataset.decision as 'approved' | 'denied';
    void store.decide(button.dataset.approval as string, decision).then(() => poll());
  });

  const actorInput = el<HTMLInputElement>('actor');
  actorInput.addEventListener('input', () => store.setActor(actorInput.value));

  void poll();
  window.setInterval(() => void poll(), POLL_INTERVAL_MS);
}

document.addEventListener('DOMContentLoaded', wire);
