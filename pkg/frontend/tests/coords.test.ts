import { describe, expect, it } from 'vitest';

import { boxFromDrag, canvasToImage, imageToCanvas, makeView } from '../src/coords.js';

describe('canvas/image transform', () => {
  it('is the identity at zoom 1 with no offset', () => {
    const view = makeView(1);
    expect(canvasToImage(view, { x: 37, y: 81 })).toEqual({ x: 37, y: 81 });
    expect(imageToCanvas(view, { x: 37, y: 81 })).toEqual({ x: 37, y: 81 });
  });

  it('matches hand-computed points at 2x zoom', () => {
    // canvas = image * 2 + offset; with offset (10, 4):
    // image (12.5, 17.5) -> canvas (35, 39), and back
    const view = makeView(2, 10, 4);
    expect(imageToCanvas(view, { x: 12.5, y: 17.5 })).toEqual({ x: 35, y: 39 });
    expect(canvasToImage(view, { x: 35, y: 39 })).toEqual({ x: 12.5, y: 17.5 });
    expect(canvasToImage(view, { x: 10, y: 4 })).toEqual({ x: 0, y: 0 });
  });

  it('is bijective on integer pixel centers at every zoom', () => {
    for (const zoom of [0.5, 1, 2, 4]) {
      const view = makeView(zoom, 7, -3);
      for (let y = 0; y < 6; y++) {
        for (let x = 0; x < 8; x++) {
          const center = { x: x + 0.5, y: y + 0.5 };
          const back = canvasToImage(view, imageToCanvas(view, center));
          expect(back, `zoom ${zoom} pixel (${x},${y})`).toEqual(center);
        }
      }
    }
    // non-power-of-two zoom: allow float slack but the mapping must still
    // land back inside the same pixel
    const view = makeView(3, 0, 0);
    for (let x = 0; x < 8; x++) {
      const back = canvasToImage(view, imageToCanvas(view, { x: x + 0.5, y: 0.5 }));
      expect(back.x).toBeCloseTo(x + 0.5, 12);
      expect(Math.floor(back.x)).toBe(x);
    }
  });

  it('rejects non-positive zoom', () => {
    expect(() => makeView(0)).toThrow(/zoom/);
    expect(() => makeView(-2)).toThrow(/zoom/);
  });
});

describe('boxFromDrag', () => {
  const image = { w: 200, h: 300 };

  it('maps an unscaled drag straight through', () => {
    const box = boxFromDrag(makeView(1), { x: 10, y: 20 }, { x: 110, y: 220 }, image.w, image.h);
    expect(box).toEqual([10, 20, 110, 220]);
  });

  it('orders corners regardless of drag direction', () => {
    const down = boxFromDrag(makeView(1), { x: 110, y: 220 }, { x: 10, y: 20 }, image.w, image.h);
    expect(down).toEqual([10, 20, 110, 220]);
  });

  it('a 2x-zoom drag of the same screen region gives the same image box', () => {
    const unzoomed = boxFromDrag(makeView(1), { x: 10, y: 20 }, { x: 110, y: 220 }, image.w, image.h);
    const zoomed = boxFromDrag(makeView(2), { x: 20, y: 40 }, { x: 220, y: 440 }, image.w, image.h);
    expect(zoomed).toEqual(unzoomed);
  });

  it('clamps a drag that ends outside the image', () => {
    const box = boxFromDrag(makeView(1), { x: 150, y: 250 }, { x: 500, y: 500 }, image.w, image.h);
    expect(box).toEqual([150, 250, 200, 300]);
  });

  it('rejects zero-area boxes', () => {
    expect(boxFromDrag(makeView(1), { x: 50, y: 50 }, { x: 50, y: 90 }, image.w, image.h)).toBeNull();
    expect(boxFromDrag(makeView(1), { x: 50, y: 50 }, { x: 50, y: 50 }, image.w, image.h)).toBeNull();
    // entirely outside the image clamps to a zero-area sliver
    expect(boxFromDrag(makeView(1), { x: 300, y: 50 }, { x: 400, y: 90 }, image.w, image.h)).toBeNull();
  });
});
