/** Single-page app wiring: canvas, click handlers, head switcher, undo,
 * frame advance, opacity, and the busy/error indicators. */

import { ApiClient } from "./api.js";
import { SessionController, UiSessionState } from "./state.js";
import { decodeMaskBitmap, render } from "./overlay.js";

const apiBase = (window as { HYPERSEG_API?: string }).HYPERSEG_API ?? "";
const api = new ApiClient(apiBase);

const canvas = document.getElementById("view") as HTMLCanvasElement;
const frameInput = document.getElementById("frame-input") as HTMLInputElement;
const advanceInput = document.getElementById("advance-input") as HTMLInputElement;
const headsDiv = document.getElementById("heads") as HTMLDivElement;
const undoButton = document.getElementById("undo") as HTMLButtonElement;
const opacitySlider = document.getElementById("opacity") as HTMLInputElement;
const zoomSelect = document.getElementById("zoom") as HTMLSelectElement;
const busySpan = document.getElementById("busy") as HTMLSpanElement;
const banner = document.getElementById("banner") as HTMLDivElement;

let zoom = 1;
let opacity = 0.45;
let frameBitmap: ImageBitmap | null = null;
let maskBitmap: ImageBitmap | null = null;
let lastOverlayBytes: Uint8Array | null = null;

const controller = new SessionController(api, (state) => {
  void onState(state);
});

async function onState(state: UiSessionState): Promise<void> {
  busySpan.style.visibility = state.busy ? "visible" : "hidden";
  banner.textContent = state.errorBanner ?? "";
  banner.style.display = state.errorBanner ? "block" : "none";
  undoButton.disabled = !controller.canUndo();
  if (state.overlayBytes !== lastOverlayBytes) {
    lastOverlayBytes = state.overlayBytes;
    maskBitmap = state.overlayBytes ? await decodeMaskBitmap(state.overlayBytes) : null;
  }
  renderHeads(state);
  redraw(state);
}

function renderHeads(state: UiSessionState): void {
  headsDiv.replaceChildren();
  for (let m = 1; m <= state.numHeads; m++) {
    const button = document.createElement("button");
    button.textContent = `head ${m}`;
    button.disabled = state.busy || m === state.selectedHead;
    button.onclick = () => void controller.selectHead(m);
    headsDiv.appendChild(button);
  }
}

function redraw(state: UiSessionState): void {
  canvas.width = Math.max(1, Math.round(state.width * zoom));
  canvas.height = Math.max(1, Math.round(state.height * zoom));
  render(canvas, { frame: frameBitmap, mask: maskBitmap, clicks: state.clicks, zoom, opacity });
}

function canvasPosition(ev: MouseEvent): { dx: number; dy: number } {
  const rect = canvas.getBoundingClientRect();
  return { dx: ev.clientX - rect.left, dy: ev.clientY - rect.top };
}

canvas.addEventListener("click", (ev) => {
  const { dx, dy } = canvasPosition(ev);
  controller.placeClickFromDisplay(dx, dy, zoom, "pos");
});

canvas.addEventListener("contextmenu", (ev) => {
  ev.preventDefault();
  const { dx, dy } = canvasPosition(ev);
  controller.placeClickFromDisplay(dx, dy, zoom, "neg");
});

undoButton.addEventListener("click", () => void controller.undoClick());

opacitySlider.addEventListener("input", () => {
  opacity = Number(opacitySlider.value) / 100;
  redraw(controller.state);
});

zoomSelect.addEventListener("change", () => {
  zoom = Number(zoomSelect.value);
  redraw(controller.state);
});

async function fileToBase64(file: File): Promise<string> {
  const bytes = new Uint8Array(await file.arrayBuffer());
  let binary = "";
  for (const b of bytes) binary += String.fromCharCode(b);
  return btoa(binary);
}

frameInput.addEventListener("change", async () => {
  const file = frameInput.files?.[0];
  if (!file) return;
  frameBitmap = await createImageBitmap(file);
  await controller.createSession(await fileToBase64(file));
});

advanceInput.addEventListener("change", async () => {
  const file = advanceInput.files?.[0];
  if (!file) return;
  frameBitmap = await createImageBitmap(file);
  await controller.advanceFrame(await fileToBase64(file));
});
