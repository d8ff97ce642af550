/** Payload shapes of the rating-service API. */

export interface StimulusPayload {
  id: string;
  audio: string;
  initial_slider: number;
}

export interface PanelPayload {
  panel_id: string;
  index: number;
  count: number;
  reference_audio: string;
  stimuli: StimulusPayload[];
}

export interface SessionState {
  token: string;
  participant: string;
  test_set: number;
  panel_count: number;
  completed: number;
  done: boolean;
  panel: PanelPayload | null;
  accepted?: boolean;
}

export interface SubmitPayload {
  token: string;
  panel_id: string;
  scores: Record<string, number>;
  listened: Record<string, boolean>;
  moved: Record<string, boolean>;
}

export interface ApiError {
  error: string;
  details?: { stimulus: string; reason: string }[];
}
