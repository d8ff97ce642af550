/**
 * Session controller. All ordering state lives on the server; the client
 * renders whatever panel the service says is current. Submits are guarded
 * against double-firing, and a retry that races a previously-delivered
 * submission is reconciled through the panel-scoped id: the service rejects
 * the duplicate (409) and the client resyncs to the current panel instead
 * of re-sending, so no record is ever duplicated.
 */

import { ServiceRejection, currentPanel, startSession, submitPanel } from "./api";
import type { PanelGate } from "./gating";
import { renderDone, renderPanel } from "./panel";
import type { SessionState, SubmitPayload } from "./types";

export class App {
  private token: string | null = null;
  private submitting = false;

  constructor(
    private readonly container: HTMLElement,
    private readonly statusLine: HTMLElement,
  ) {}

  async start(participant: string): Promise<void> {
    try {
      const state = await startSession(participant, false);
      this.apply(state);
    } catch (err) {
      if (err instanceof ServiceRejection && err.status === 409) {
        // an abandoned session exists; take it over and resume
        this.apply(await startSession(participant, true));
        return;
      }
      this.showError(err);
    }
  }

  buildPayload(gate: PanelGate, panelId: string): SubmitPayload {
    if (!this.token) throw new Error("no active session");
    return {
      token: this.token,
      panel_id: panelId,
      scores: gate.scores(),
      listened: gate.listenedFlags(),
      moved: gate.movedFlags(),
    };
  }

  private async submit(gate: PanelGate, panelId: string): Promise<void> {
    if (this.submitting) return;               // double-click guard
    this.submitting = true;
    try {
      this.apply(await submitPanel(this.buildPayload(gate, panelId)));
    } catch (err) {
      if (err instanceof ServiceRejection && err.status === 409 && this.token) {
        // the earlier attempt already landed; resync instead of re-sending
        this.apply(await currentPanel(this.token));
      } else {
        this.showError(err);
      }
    } finally {
      this.submitting = false;
    }
  }

  private apply(state: SessionState): void {
    this.token = state.token;
    this.statusLine.textContent =
      `Participant ${state.participant} · completed ${state.completed}/${state.panel_count}`;
    if (state.done || !state.panel) {
      renderDone(this.container, state.completed);
      return;
    }
    const panel = state.panel;
    renderPanel(this.container, panel, (gate) => void this.submit(gate, panel.panel_id));
  }

  private showError(err: unknown): void {
    const box = document.createElement("p");
    box.className = "error";
    if (err instanceof ServiceRejection) {
      const details = (err.body.details ?? [])
        .map((d) => `${d.stimulus}: ${d.reason}`)
        .join("; ");
      box.textContent = details ? `${err.body.error} — ${details}` : err.body.error;
    } else {
      box.textContent = `request failed: ${String(err)}`;
    }
    this.container.prepend(box);
  }
}
