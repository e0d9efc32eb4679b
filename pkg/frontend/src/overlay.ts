/**
 * Pixel-level compositing helpers. Pure functions over typed arrays so the
 * overlay pipeline can be tested without a DOM.
 */

import type { Mask } from './rle.js';

export interface RGBA {
  r: number;
  g: number;
  b: number;
}

export const MASK_COLOR: RGBA = { r: 59, g: 130, b: 246 }; // blue

/** RGBA buffer (width*height*4) with the mask color at the given opacity. */
export function maskToRGBA(mask: Mask, color: RGBA, opacity: number): Uint8ClampedArray<ArrayBuffer> {
  const out = new Uint8ClampedArray(new ArrayBuffer(mask.width * mask.height * 4));
  const alpha = Math.round(Math.min(1, Math.max(0, opacity)) * 255);
  for (let i = 0; i < mask.data.length; i++) {
    if (mask.data[i]) {
      const o = i * 4;
      out[o] = color.r;
      out[o + 1] = color.g;
      out[o + 2] = color.b;
      out[o + 3] = alpha;
    }
  }
  return out;
}

/** Fraction of mask pixels set — handy for status lines and tests. */
export function maskCoverage(mask: Mask): number {
  let on = 0;
  for (let i = 0; i < mask.data.length; i++) on += mask.data[i]!;
  return mask.data.length ? on / mask.data.length : 0;
}
