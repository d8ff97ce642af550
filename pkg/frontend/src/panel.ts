/**
 * Panel rendering. Stimuli get anonymous letter labels in delivered order;
 * nothing in the DOM or in outgoing payloads identifies the underlying
 * system. Sliders start at the service-provided randomized values with the
 * scale annotated at 0 ("completely unnatural") and 100 ("completely
 * natural"). The proceed button stays disabled until the gate opens.
 */

import { PanelGate } from "./gating";
import type { PanelPayload } from "./types";

export interface PanelView {
  root: HTMLElement;
  gate: PanelGate;
  proceedButton: HTMLButtonElement;
}

const LABELS = "ABCDEFGHIJKLMNOPQRSTUVWXYZ";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function audioPlayer(src: string, onEnded: () => void): HTMLElement {
  const wrap = el("div", "player");
  const audio = el("audio");
  audio.controls = true;
  audio.preload = "auto";
  audio.src = src;
  audio.addEventListener("ended", onEnded);
  const retry = el("button", "retry", "reload audio");
  retry.type = "button";
  retry.hidden = true;
  retry.addEventListener("click", () => {
    retry.hidden = true;
    audio.load();
  });
  audio.addEventListener("error", () => {
    retry.hidden = false;
  });
  wrap.append(audio, retry);
  return wrap;
}

export function renderPanel(
  container: HTMLElement,
  panel: PanelPayload,
  onSubmit: (gate: PanelGate) => void,
): PanelView {
  const gate = new PanelGate(panel);
  container.replaceChildren();

  const root = el("section", "panel");
  root.append(el("h2", "panel-title", `Panel ${panel.index + 1} of ${panel.count}`));
  root.append(
    el(
      "p",
      "instructions",
      "Listen to the reference, then rate how natural every sample sounds. " +
        "You must play each sample to the end and move every slider before continuing.",
    ),
  );

  const reference = el("div", "reference");
  reference.append(el("h3", undefined, "Reference"));
  reference.append(audioPlayer(panel.reference_audio, () => undefined));
  root.append(reference);

  const list = el("div", "stimuli");
  const hint = el("p", "hint");
  const proceedButton = el("button", "proceed", "Save ratings and continue");
  proceedButton.type = "button";

  const refresh = () => {
    proceedButton.disabled = !gate.canProceed;
    const pending = gate.pending();
    hint.textContent = gate.canProceed
      ? "All samples rated."
      : `Still to do: listen to ${pending.notListened} sample(s) to the end, ` +
        `move ${pending.notMoved} slider(s).`;
  };

  panel.stimuli.forEach((stim, i) => {
    const row = el("div", "stimulus");
    row.dataset.stimulus = stim.id;
    row.append(el("h3", undefined, `Sample ${LABELS[i] ?? String(i + 1)}`));
    row.append(
      audioPlayer(stim.audio, () => {
        gate.markListened(stim.id);
        refresh();
      }),
    );

    const sliderWrap = el("div", "slider");
    const low = el("span", "scale-label", "0 — completely unnatural");
    const high = el("span", "scale-label", "100 — completely natural");
    const slider = el("input") as HTMLInputElement;
    slider.type = "range";
    slider.min = "0";
    slider.max = "100";
    slider.step = "1";
    slider.value = String(stim.initial_slider);
    const valueLabel = el("output", "value", String(stim.initial_slider));
    slider.addEventListener("input", () => {
      gate.setSlider(stim.id, Number(slider.value));
      valueLabel.textContent = slider.value;
      refresh();
    });
    sliderWrap.append(low, slider, high, valueLabel);
    row.append(sliderWrap);
    list.append(row);
  });

  root.append(list, hint, proceedButton);
  proceedButton.addEventListener("click", () => {
    if (gate.canProceed) onSubmit(gate);
  });

  refresh();
  container.append(root);
  return { root, gate, proceedButton };
}

export function renderDone(container: HTMLElement, completed: number): void {
  container.replaceChildren();
  const root = el("section", "done");
  root.append(el("h2", undefined, "All done"));
  root.append(
    el("p", undefined, `You rated ${completed} panel(s). Thank you for taking part.`),
  );
  container.append(root);
}
