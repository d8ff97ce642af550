import { App } from "./app";

function bootstrap(): void {
  const container = document.getElementById("panel-root");
  const statusLine = document.getElementById("status-line");
  const form = document.getElementById("start-form") as HTMLFormElement | null;
  const input = document.getElementById("participant-id") as HTMLInputElement | null;
  if (!container || !statusLine || !form || !input) {
    throw new Error("missing page scaffold");
  }
  const app = new App(container, statusLine);
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const participant = input.value.trim();
    if (!participant) return;
    form.hidden = true;
    void app.start(participant);
  });
}

document.addEventListener("DOMContentLoaded", bootstrap);
