export interface EditSummary {
  id: string;
  prompt: string;
  variant: string;
  editor_kind: string;
  edit_cutoff: number;
  default_tau: number;
}

export interface ApplyRequest {
  artifact_id: string;
  seed: number;
  alpha: number;
  tau: number;
  layer_toggles: boolean[] | null;
}

export interface ApplyMetrics {
  pixel_l2: number;
  id_similarity: number;
}

export interface ApplyResponse {
  edited_image: string;
  original_image: string;
  masks: string[];
  area_fractions: number[];
  metrics: ApplyMetrics;
}

export const ALPHA_MIN = -1.5;
export const ALPHA_MAX = 1.5;
export const TAU_MIN = 0;
export const TAU_MAX = 1;

export const clampAlpha = (value: number): number =>
  Math.min(ALPHA_MAX, Math.max(ALPHA_MIN, value));

export const clampTau = (value: number): number =>
  Math.min(TAU_MAX, Math.max(TAU_MIN, value));
