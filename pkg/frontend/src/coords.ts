/**
 * Display <-> image coordinate mapping.
 *
 * The frame is drawn scaled by `zoom`, so image pixel `i` covers the display
 * span [i*zoom, (i+1)*zoom). A display point maps to the image pixel whose
 * span contains it; an image pixel maps back to the display position of its
 * center. With integer display coordinates (mouse events) the round trip
 * lands within 0.5 display pixels at any zoom level.
 */

export interface ImagePoint {
  x: number;
  y: number;
}

export function displayToImageCoord(d: number, zoom: number, extent: number): number {
  const i = Math.floor(d / zoom);
  return Math.min(extent - 1, Math.max(0, i));
}

export function imageToDisplayCoord(i: number, zoom: number): number {
  return (i + 0.5) * zoom - 0.5;
}

export function displayToImage(
  dx: number,
  dy: number,
  zoom: number,
  width: number,
  height: number,
): ImagePoint {
  return {
    x: displayToImageCoord(dx, zoom, width),
    y: displayToImageCoord(dy, zoom, height),
  };
}
