/**
 * Canvas <-> image coordinate mapping.
 *
 * The image is drawn at an integer-independent zoom factor with an optional
 * pan offset, so canvas = image * zoom + offset. The mapping must be exactly
 * invertible on pixel centers at every zoom, which is why both directions
 * are plain affine transforms with no rounding.
 */

export interface ViewTransform {
  zoom: number;
  offsetX: number;
  offsetY: number;
}

export interface Point {
  x: number;
  y: number;
}

/** Box in image pixel coordinates, corners ordered (x0 <= x1, y0 <= y1). */
export type Box = [number, number, number, number];

export function makeView(zoom = 1, offsetX = 0, offsetY = 0): ViewTransform {
  if (!(zoom > 0)) throw new Error(`zoom must be positive, got ${zoom}`);
  return { zoom, offsetX, offsetY };
}

export function canvasToImage(view: ViewTransform, p: Point): Point {
  return { x: (p.x - view.offsetX) / view.zoom, y: (p.y - view.offsetY) / view.zoom };
}

export function imageToCanvas(view: ViewTransform, p: Point): Point {
  return { x: p.x * view.zoom + view.offsetX, y: p.y * view.zoom + view.offsetY };
}

const clamp = (v: number, lo: number, hi: number) => Math.min(hi, Math.max(lo, v));

/**
 * Turn a drag (two canvas points) into an image-coordinate box: corners
 * ordered, clamped to the image bounds. Returns null for a zero-area box
 * (the caller shows the visual cue).
 */
export function boxFromDrag(
  view: ViewTransform,
  start: Point,
  end: Point,
  imageWidth: number,
  imageHeight: number,
): Box | null {
  const a = canvasToImage(view, start);
  const b = canvasToImage(view, end);
  const x0 = clamp(Math.min(a.x, b.x), 0, imageWidth);
  const x1 = clamp(Math.max(a.x, b.x), 0, imageWidth);
  const y0 = clamp(Math.min(a.y, b.y), 0, imageHeight);
  const y1 = clamp(Math.max(a.y, b.y), 0, imageHeight);
  if (x1 - x0 <= 0 || y1 - y0 <= 0) return null;
  return [x0, y0, x1, y1];
}
