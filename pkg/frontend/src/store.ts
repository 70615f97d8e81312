import type { EditServiceClient } from "./api.js";
import { createApplyDebouncer, type ApplyDebouncer } from "./debounce.js";
import {
  clampAlpha,
  clampTau,
  type ApplyRequest,
  type ApplyResponse,
  type EditSummary,
} from "./types.js";

export interface SessionState {
  artifactId: string | null;
  seed: number;
  alpha: number;
  tau: number;
  layerToggles: boolean[];
  lastResponse: ApplyResponse | null;
  error: string | null;
  pending: boolean;
}

export type Listener = (state: SessionState) => void;

export interface SessionStore {
  readonly state: SessionState;
  readonly edits: EditSummary[];
  selectArtifact(id: string): void;
  setSeed(seed: number): void;
  setAlpha(alpha: number): void;
  setTau(tau: number): void;
  toggleLayer(layer: number): void;
  setAllLayers(on: boolean): void;
  retry(): void;
  subscribe(listener: Listener): () => void;
}

export function createSessionStore(
  client: EditServiceClient,
  edits: EditSummary[],
): SessionStore {
  const state: SessionState = {
    artifactId: null,
    seed: 0,
    alpha: 1,
    tau: 0.85,
    layerToggles: [],
    lastResponse: null,
    error: null,
    pending: false,
  };
  const listeners = new Set<Listener>();

  const notify = () => {
    for (const listener of listeners) listener(state);
  };

  const debouncer: ApplyDebouncer<ApplyRequest> = createApplyDebouncer(
    (request) => client.applyEdit(request),
    (response) => {
      state.lastResponse = response;
      state.error = null;
      state.pending = debouncer.inFlight;
      notify();
    },
    (error) => {
      // surface the failure but keep the session state intact
      state.error = error instanceof Error ? error.message : String(error);
      state.pending = debouncer.inFlight;
      notify();
    },
  );

  const summary = (id: string): EditSummary => {
    const found = edits.find((edit) => edit.id === id);
    if (!found) throw new Error(`unknown artifact ${id}`);
    return found;
  };

  const currentRequest = (): ApplyRequest => ({
    artifact_id: state.artifactId as string,
    seed: state.seed,
    alpha: state.alpha,
    tau: state.tau,
    layer_toggles: state.layerToggles.every(Boolean)
      ? null
      : [...state.layerToggles],
  });

  const requestApply = () => {
    if (state.artifactId === null) return;
    state.pending = true;
    debouncer.dispatch(currentRequest());
    notify();
  };

  return {
    get state() {
      return state;
    },
    edits,
    selectArtifact(id: string) {
      const edit = summary(id);
      state.artifactId = id;
      state.alpha = 1;
      state.tau = edit.default_tau;
      state.layerToggles = new Array(edit.edit_cutoff).fill(true);
      requestApply();
    },
    setSeed(seed: number) {
      state.seed = Math.trunc(seed);
      requestApply();
    },
    setAlpha(alpha: number) {
      state.alpha = clampAlpha(alpha);
      requestApply();
    },
    setTau(tau: number) {
      state.tau = clampTau(tau);
      requestApply();
    },
    toggleLayer(layer: number) {
      if (layer < 1 || layer > state.layerToggles.length) return;
      state.layerToggles[layer - 1] = !state.layerToggles[layer - 1];
      requestApply();
    },
    setAllLayers(on: boolean) {
      state.layerToggles = state.layerToggles.map(() => on);
      requestApply();
    },
    retry() {
      requestApply();
    },
    subscribe(listener: Listener) {
      listeners.add(listener);
      return () => listeners.delete(listener);
    },
  };
}
