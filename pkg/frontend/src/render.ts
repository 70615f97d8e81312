import type { SessionState, SessionStore } from "./store.js";
import { ALPHA_MAX, ALPHA_MIN } from "./types.js";

const pngSrc = (b64: string) => `data:image/png;base64,${b64}`;

export function mountExplorer(root: HTMLElement, store: SessionStore): void {
  root.innerHTML = "";

  const picker = document.createElement("select");
  picker.className = "artifact-picker";
  for (const edit of store.edits) {
    const option = document.createElement("option");
    option.value = edit.id;
    option.textContent = `${edit.id} — "${edit.prompt}" (${edit.variant}/${edit.editor_kind})`;
    picker.appendChild(option);
  }
  picker.addEventListener("change", () => store.selectArtifact(picker.value));

  const seedInput = document.createElement("input");
  seedInput.type = "number";
  seedInput.value = "0";
  seedInput.addEventListener("change", () => store.setSeed(Number(seedInput.value)));

  const alphaSlider = document.createElement("input");
  alphaSlider.type = "range";
  alphaSlider.min = String(ALPHA_MIN);
  alphaSlider.max = String(ALPHA_MAX);
  alphaSlider.step = "0.05";
  alphaSlider.addEventListener("input", () => store.setAlpha(Number(alphaSlider.value)));

  const tauSlider = document.createElement("input");
  tauSlider.type = "range";
  tauSlider.min = "0";
  tauSlider.max = "1";
  tauSlider.step = "0.01";
  tauSlider.addEventListener("input", () => store.setTau(Number(tauSlider.value)));

  const alphaLabel = document.createElement("span");
  const tauLabel = document.createElement("span");

  const controls = document.createElement("div");
  controls.className = "controls";
  for (const [label, node, value] of [
    ["edit", picker, null],
    ["seed", seedInput, null],
    ["strength α", alphaSlider, alphaLabel],
    ["threshold τ", tauSlider, tauLabel],
  ] as const) {
    const row = document.createElement("label");
    row.textContent = `${label} `;
    row.appendChild(node);
    if (value) row.appendChild(value);
    controls.appendChild(row);
  }

  const original = document.createElement("img");
  original.className = "pane original";
  const edited = document.createElement("img");
  edited.className = "pane edited";
  const maskOverlay = document.createElement("img");
  maskOverlay.className = "mask-overlay";
  maskOverlay.hidden = true;
  const editedWrap = document.createElement("div");
  editedWrap.className = "edited-wrap";
  editedWrap.append(edited, maskOverlay);
  const compare = document.createElement("div");
  compare.className = "compare";
  compare.append(original, editedWrap);

  const layerStrip = document.createElement("div");
  layerStrip.className = "layer-strip";

  const errorPanel = document.createElement("div");
  errorPanel.className = "error-panel";
  errorPanel.hidden = true;
  const errorText = document.createElement("span");
  const retryButton = document.createElement("button");
  retryButton.textContent = "retry";
  retryButton.addEventListener("click", () => store.retry());
  errorPanel.append(errorText, retryButton);

  const status = document.createElement("div");
  status.className = "status";

  root.append(controls, errorPanel, compare, layerStrip, status);

  const renderLayers = (state: SessionState) => {
    layerStrip.innerHTML = "";
    const response = state.lastResponse;
    if (!response) return;
    response.masks.forEach((mask, index) => {
      const layer = index + 1;
      const cell = document.createElement("figure");
      cell.className = "layer-cell";
      const thumb = document.createElement("img");
      thumb.src = pngSrc(mask);
      thumb.className = "mask-thumb";
      // hovering a layer tints its mask over the edited pane
      thumb.addEventListener("mouseenter", () => {
        maskOverlay.src = pngSrc(mask);
        maskOverlay.hidden = false;
        thumb.classList.add("hovered");
      });
      thumb.addEventListener("mouseleave", () => {
        maskOverlay.hidden = true;
        thumb.classList.remove("hovered");
      });
      const caption = document.createElement("figcaption");
      const fraction = response.area_fractions[index];
      const toggle = document.createElement("input");
      toggle.type = "checkbox";
      toggle.checked = state.layerToggles[index] ?? true;
      toggle.addEventListener("change", () => store.toggleLayer(layer));
      caption.textContent = `L${layer} ${(fraction * 100).toFixed(1)}% `;
      caption.appendChild(toggle);
      cell.append(thumb, caption);
      layerStrip.appendChild(cell);
    });
  };

  const render = (state: SessionState) => {
    alphaLabel.textContent = state.alpha.toFixed(2);
    tauLabel.textContent = state.tau.toFixed(2);
    alphaSlider.value = String(state.alpha);
    tauSlider.value = String(state.tau);
    errorPanel.hidden = state.error === null;
    errorText.textContent = state.error ?? "";
    status.textContent = state.pending ? "applying…" : "";
    if (state.lastResponse) {
      original.src = pngSrc(state.lastResponse.original_image);
      edited.src = pngSrc(state.lastResponse.edited_image);
    }
    renderLayers(state);
  };

  store.subscribe(render);
  render(store.state);
}
