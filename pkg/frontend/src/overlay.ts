/**
 * Canvas rendering: frame, mask overlay, and click markers.
 *
 * The overlay is always rasterized straight from the PNG bytes the server
 * returned; this module only recolors and alpha-blends it.
 */

import { imageToDisplayCoord } from "./coords.js";
import { ServerClick } from "./api.js";

export const POSITIVE_COLOR = "#2ecc40";
export const NEGATIVE_COLOR = "#ff4136";
export const OVERLAY_COLOR = "#1f77ff";

export async function decodeMaskBitmap(maskPng: Uint8Array): Promise<ImageBitmap> {
  const blob = new Blob([maskPng.slice().buffer], { type: "image/png" });
  return createImageBitmap(blob);
}

function tintMask(mask: ImageBitmap): HTMLCanvasElement {
  const off = document.createElement("canvas");
  off.width = mask.width;
  off.height = mask.height;
  const ctx = off.getContext("2d")!;
  ctx.drawImage(mask, 0, 0);
  // keep only the white (foreground) pixels, then recolor them
  ctx.globalCompositeOperation = "multiply";
  ctx.fillStyle = OVERLAY_COLOR;
  ctx.fillRect(0, 0, off.width, off.height);
  ctx.globalCompositeOperation = "destination-in";
  ctx.drawImage(mask, 0, 0);
  return off;
}

export interface RenderInputs {
  frame: ImageBitmap | null;
  mask: ImageBitmap | null;
  clicks: ServerClick[];
  zoom: number;
  opacity: number;
}

export function render(canvas: HTMLCanvasElement, inputs: RenderInputs): void {
  const { frame, mask, clicks, zoom, opacity } = inputs;
  const ctx = canvas.getContext("2d")!;
  ctx.imageSmoothingEnabled = false;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  if (frame) {
    ctx.drawImage(frame, 0, 0, frame.width * zoom, frame.height * zoom);
  }
  if (mask) {
    ctx.globalAlpha = opacity;
    ctx.drawImage(tintMask(mask), 0, 0, mask.width * zoom, mask.height * zoom);
    ctx.globalAlpha = 1.0;
  }
  for (const click of clicks) {
    const cx = imageToDisplayCoord(click.x, zoom);
    const cy = imageToDisplayCoord(click.y, zoom);
    ctx.beginPath();
    ctx.arc(cx, cy, Math.max(3, zoom * 0.6), 0, 2 * Math.PI);
    ctx.fillStyle = click.polarity === "pos" ? POSITIVE_COLOR : NEGATIVE_COLOR;
    ctx.fill();
    ctx.lineWidth = 1.5;
    ctx.strokeStyle = "#ffffff";
    ctx.stroke();
  }
}
