/** Thin typed client for the rating-service endpoints. */

import type { ApiError, SessionState, SubmitPayload } from "./types";

export class ServiceRejection extends Error {
  constructor(
    readonly status: number,
    readonly body: ApiError,
  ) {
    super(body.error);
  }
}

async function parse(response: Response): Promise<SessionState> {
  const body = await response.json();
  if (!response.ok) throw new ServiceRejection(response.status, body as ApiError);
  return body as SessionState;
}

export async function startSession(participant: string, resume = false): Promise<SessionState> {
  const response = await fetch("/api/start", {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify({ participant, resume }),
  });
  return parse(response);
}

export async function currentPanel(token: string): Promise<SessionState> {
  const response = await fetch(`/api/panel?token=${encodeURIComponent(token)}`);
  return parse(response);
}

export async function submitPanel(payload: SubmitPayload): Promise<SessionState> {
  const response = await fetch("/api/submit", {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(payload),
  });
  return parse(response);
}
