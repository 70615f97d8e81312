import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { createSessionStore } from "../src/store.js";
import { clampAlpha, clampTau } from "../src/types.js";
import { createFakeService, directResponse, SUMMARIES } from "./fake_service.js";

const settle = async (ms = 5000) => {
  await vi.advanceTimersByTimeAsync(ms);
};

describe("scripted explorer session", () => {
  beforeEach(() => {
    vi.useFakeTimers();
  });
  afterEach(() => {
    vi.useRealTimers();
  });

  it("slider sweep displays exactly the direct service responses", async () => {
    const { client } = createFakeService();
    const store = createSessionStore(client, SUMMARIES);
    store.selectArtifact("demo_edit");
    await settle();

    for (const alpha of [-1.5, 0, 1.5]) {
      for (const tau of [0, 0.85]) {
        store.setAlpha(alpha);
        store.setTau(tau);
        await settle();
        const shown = store.state.lastResponse;
        expect(shown).not.toBeNull();
        const direct = directResponse({
          artifact_id: "demo_edit",
          seed: 0,
          alpha,
          tau,
          layer_toggles: null,
        });
        expect(shown!.edited_image).toBe(direct.edited_image);
        expect(shown!.original_image).toBe(direct.original_image);
        expect(shown!.masks).toEqual(direct.masks);
      }
    }
  });

  it("alpha at zero displays an edited pane identical to the original", async () => {
    const { client } = createFakeService();
    const store = createSessionStore(client, SUMMARIES);
    store.selectArtifact("demo_edit");
    store.setAlpha(0);
    await settle();
    const shown = store.state.lastResponse!;
    expect(shown.edited_image).toBe(shown.original_image);
  });

  it("toggling off all layers yields zero area fractions", async () => {
    const { client } = createFakeService();
    const store = createSessionStore(client, SUMMARIES);
    store.selectArtifact("demo_edit");
    store.setAllLayers(false);
    await settle();
    const shown = store.state.lastResponse!;
    expect(shown.area_fractions.every((f) => f === 0)).toBe(true);
  });

  it("raising tau never increases any area fraction", async () => {
    const { client } = createFakeService();
    const store = createSessionStore(client, SUMMARIES);
    store.selectArtifact("demo_edit");
    const sweeps: number[][] = [];
    for (const tau of [0, 0.25, 0.5, 0.85, 1]) {
      store.setTau(tau);
      await settle();
      sweeps.push([...store.state.lastResponse!.area_fractions]);
    }
    for (let i = 1; i < sweeps.length; i++) {
      sweeps[i].forEach((fraction, layer) => {
        expect(fraction).toBeLessThanOrEqual(sweeps[i - 1][layer]);
      });
    }
  });

  it("discards stale work under 500 ms latency and lands on the last slider value", async () => {
    const { client, requests } = createFakeService({ latencyMs: () => 500 });
    const store = createSessionStore(client, SUMMARIES);
    store.selectArtifact("demo_edit");
    await settle();

    const moves = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];
    for (const alpha of moves) {
      store.setAlpha(alpha);
    }
    await settle();

    const direct = directResponse({
      artifact_id: "demo_edit",
      seed: 0,
      alpha: 1.0,
      tau: 0.85,
      layer_toggles: null,
    });
    expect(store.state.lastResponse!.edited_image).toBe(direct.edited_image);
    // after the select request, ten rapid moves produced exactly two more:
    // the leading one and the trailing coalesced one
    const alphas = requests.slice(1).map((r) => r.alpha);
    expect(alphas).toEqual([0.1, 1.0]);
  });

  it("keeps state and shows a retryable error when the service is down", async () => {
    const { client } = createFakeService({ failAll: true });
    const store = createSessionStore(client, SUMMARIES);
    store.selectArtifact("demo_edit");
    store.setAlpha(0.75);
    await settle();
    expect(store.state.error).toContain("service down");
    expect(store.state.alpha).toBe(0.75);
    expect(store.state.artifactId).toBe("demo_edit");
  });

  it("select defaults: full strength, artifact threshold, all layers on", async () => {
    const { client, requests } = createFakeService();
    const store = createSessionStore(client, SUMMARIES);
    store.selectArtifact("demo_edit");
    await settle();
    expect(store.state.alpha).toBe(1);
    expect(store.state.tau).toBe(0.85);
    expect(store.state.layerToggles).toEqual(new Array(6).fill(true));
    expect(requests[0].layer_toggles).toBeNull();
  });

  it("never sends alpha or tau outside the declared bounds", async () => {
    const { client, requests } = createFakeService();
    const store = createSessionStore(client, SUMMARIES);
    store.selectArtifact("demo_edit");
    store.setAlpha(99);
    store.setTau(-3);
    await settle();
    expect(clampAlpha(99)).toBe(1.5);
    expect(clampTau(-3)).toBe(0);
    for (const request of requests) {
      expect(request.alpha).toBeGreaterThanOrEqual(-1.5);
      expect(request.alpha).toBeLessThanOrEqual(1.5);
      expect(request.tau).toBeGreaterThanOrEqual(0);
      expect(request.tau).toBeLessThanOrEqual(1);
    }
  });
});
