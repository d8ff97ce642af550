import { beforeEach, describe, expect, it } from "vitest";

import { renderDone, renderPanel } from "../src/panel";
import type { PanelGate } from "../src/gating";
import type { PanelPayload } from "../src/types";

function sevenStimulusPanel(): PanelPayload {
  return {
    panel_id: "p2",
    index: 2,
    count: 10,
    reference_audio: "/audio/tok/p2/ref",
    stimuli: Array.from({ length: 7 }, (_, i) => ({
      id: `p2_s${i}`,
      audio: `/audio/tok/p2/p2_s${i}`,
      initial_slider: (13 * i + 7) % 101,
    })),
  };
}

function playAll(container: HTMLElement): void {
  container
    .querySelectorAll<HTMLAudioElement>(".stimulus audio")
    .forEach((audio) => audio.dispatchEvent(new Event("ended")));
}

function moveAll(container: HTMLElement): void {
  container.querySelectorAll<HTMLInputElement>("input[type=range]").forEach((slider) => {
    slider.value = String((Number(slider.value) + 11) % 101);
    slider.dispatchEvent(new Event("input"));
  });
}

describe("renderPanel", () => {
  let container: HTMLElement;

  beforeEach(() => {
    container = document.createElement("div");
    document.body.replaceChildren(container);
  });

  it("renders one slider per stimulus plus one reference player", () => {
    renderPanel(container, sevenStimulusPanel(), () => undefined);
    expect(container.querySelectorAll("input[type=range]")).toHaveLength(7);
    expect(container.querySelectorAll(".reference audio")).toHaveLength(1);
    expect(container.querySelectorAll(".stimulus audio")).toHaveLength(7);
  });

  it("initializes sliders to the service-provided values in delivered order", () => {
    const panel = sevenStimulusPanel();
    renderPanel(container, panel, () => undefined);
    const sliders = [...container.querySelectorAll<HTMLInputElement>("input[type=range]")];
    expect(sliders.map((s) => Number(s.value))).toEqual(
      panel.stimuli.map((s) => s.initial_slider),
    );
  });

  it("keeps proceed disabled until everything is played and every slider moved", () => {
    renderPanel(container, sevenStimulusPanel(), () => undefined);
    const proceed = container.querySelector<HTMLButtonElement>("button.proceed")!;
    expect(proceed.disabled).toBe(true);

    playAll(container);
    expect(proceed.disabled).toBe(true); // sliders untouched

    moveAll(container);
    expect(proceed.disabled).toBe(false);
  });

  it("slider-only interaction is not enough", () => {
    renderPanel(container, sevenStimulusPanel(), () => undefined);
    moveAll(container);
    const proceed = container.querySelector<HTMLButtonElement>("button.proceed")!;
    expect(proceed.disabled).toBe(true);
  });

  it("does not submit while the gate is closed, submits once open", () => {
    let submitted: PanelGate | null = null;
    renderPanel(container, sevenStimulusPanel(), (gate) => {
      submitted = gate;
    });
    const proceed = container.querySelector<HTMLButtonElement>("button.proceed")!;
    proceed.click();
    expect(submitted).toBeNull();
    playAll(container);
    moveAll(container);
    proceed.click();
    expect(submitted).not.toBeNull();
    const flags = submitted!.listenedFlags();
    expect(Object.values(flags).every(Boolean)).toBe(true);
  });

  it("reveals no system identity in the rendered markup", () => {
    renderPanel(container, sevenStimulusPanel(), () => undefined);
    const html = document.body.innerHTML;
    expect(html).not.toMatch(/system/i);
    expect(html).not.toMatch(/SING|MULT|MONO|resyn/);
    const headings = [...container.querySelectorAll(".stimulus h3")].map(
      (h) => h.textContent,
    );
    expect(headings).toEqual(["Sample A", "Sample B", "Sample C", "Sample D",
                              "Sample E", "Sample F", "Sample G"]);
  });

  it("shows a retry affordance when audio fails to load", () => {
    renderPanel(container, sevenStimulusPanel(), () => undefined);
    const audio = container.querySelector<HTMLAudioElement>(".stimulus audio")!;
    const retry = audio.parentElement!.querySelector<HTMLButtonElement>(".retry")!;
    expect(retry.hidden).toBe(true);
    audio.dispatchEvent(new Event("error"));
    expect(retry.hidden).toBe(false);
  });
});

describe("renderDone", () => {
  it("shows the completion screen", () => {
    const container = document.createElement("div");
    renderDone(container, 10);
    expect(container.textContent).toContain("All done");
    expect(container.textContent).toContain("10 panel(s)");
  });
});
