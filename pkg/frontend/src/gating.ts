/**
 * Completion gating for one panel: the participant may proceed only after
 * every stimulus has played to the end at least once and every slider has
 * been moved away from its randomized initial value.
 */

import type { PanelPayload } from "./types";

interface StimulusProgress {
  listened: boolean;
  moved: boolean;
  value: number;
  initial: number;
}

export class PanelGate {
  private progress = new Map<string, StimulusProgress>();

  constructor(panel: PanelPayload) {
    for (const stim of panel.stimuli) {
      this.progress.set(stim.id, {
        listened: false,
        moved: false,
        value: stim.initial_slider,
        initial: stim.initial_slider,
      });
    }
  }

  private entry(id: string): StimulusProgress {
    const entry = this.progress.get(id);
    if (!entry) throw new Error(`unknown stimulus ${id}`);
    return entry;
  }

  /** Call when a stimulus finished playing to the end. */
  markListened(id: string): void {
    this.entry(id).listened = true;
  }

  /** Call on slider input; movement is sticky once the value leaves the initial one. */
  setSlider(id: string, value: number): void {
    const entry = this.entry(id);
    entry.value = value;
    if (value !== entry.initial) entry.moved = true;
  }

  listened(id: string): boolean {
    return this.entry(id).listened;
  }

  moved(id: string): boolean {
    return this.entry(id).moved;
  }

  value(id: string): number {
    return this.entry(id).value;
  }

  get allListened(): boolean {
    return [...this.progress.values()].every((e) => e.listened);
  }

  get allMoved(): boolean {
    return [...this.progress.values()].every((e) => e.moved);
  }

  get canProceed(): boolean {
    return this.allListened && this.allMoved;
  }

  /** Remaining requirements, for the progress hint. */
  pending(): { notListened: number; notMoved: number } {
    let notListened = 0;
    let notMoved = 0;
    for (const e of this.progress.values()) {
      if (!e.listened) notListened += 1;
      if (!e.moved) notMoved += 1;
    }
    return { notListened, notMoved };
  }

  scores(): Record<string, number> {
    const out: Record<string, number> = {};
    for (const [id, e] of this.progress) out[id] = Math.round(e.value);
    return out;
  }

  listenedFlags(): Record<string, boolean> {
    const out: Record<string, boolean> = {};
    for (const [id, e] of this.progress) out[id] = e.listened;
    return out;
  }

  movedFlags(): Record<string, boolean> {
    const out: Record<string, boolean> = {};
    for (const [id, e] of this.progress) out[id] = e.moved;
    return out;
  }
}
