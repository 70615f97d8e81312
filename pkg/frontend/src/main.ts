import { createClient } from "./api.js";
import { mountExplorer } from "./render.js";
import { createSessionStore } from "./store.js";

const SERVICE_URL =
  new URLSearchParams(window.location.search).get("service") ??
  `${window.location.protocol}//${window.location.hostname}:8787`;

async function boot(): Promise<void> {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app element");
  const client = createClient(SERVICE_URL);
  try {
    const edits = await client.listEdits();
    const store = createSessionStore(client, edits);
    mountExplorer(root, store);
    if (edits.length > 0) {
      store.selectArtifact(edits[0].id);
    } else {
      root.insertAdjacentText("beforeend", "no edits available — train one first");
    }
  } catch (error) {
    root.textContent = `could not reach the edit service at ${SERVICE_URL}: ${error}`;
  }
}

void boot();
