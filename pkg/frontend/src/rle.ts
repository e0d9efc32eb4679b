/**
 * Run-length coded masks, COCO-style counts strings.
 *
 * Wire format (mirrors the service bit-exactly):
 * 1. The mask is flattened column-major (Fortran order).
 * 2. Run lengths alternate starting with background; a leading foreground
 *    pixel contributes a zero-length first run.
 * 3. From the fourth count on (index >= 3), each value is delta-coded
 *    against the count two places back.
 * 4. Values are written low-bits-first in 5-bit chunks as chr(48 + c);
 *    bit 0x20 marks continuation, and bit 0x10 on the final chunk means
 *    the remaining high bits are all ones (negative delta).
 */

export interface RLE {
  /** [height, width] */
  size: [number, number];
  counts: string;
}

/** Boolean mask in row-major order plus its dimensions. */
export interface Mask {
  width: number;
  height: number;
  /** data[y * width + x], 0 or 1 */
  data: Uint8Array;
}

export class RleError extends Error {}

export function decodeCounts(s: string): number[] {
  const counts: number[] = [];
  let p = 0;
  while (p < s.length) {
    let x = 0;
    let k = 0;
    let more = true;
    while (more) {
      const code = s.charCodeAt(p) - 48;
      if (code < 0 || code > 63) {
        throw new RleError(`invalid RLE character ${JSON.stringify(s[p])} at position ${p}`);
      }
      x |= (code & 0x1f) << (5 * k);
      more = (code & 0x20) !== 0;
      p += 1;
      k += 1;
      if (more && p >= s.length) {
        throw new RleError('truncated RLE counts string');
      }
      if (!more && code & 0x10) {
        x |= -1 << (5 * k);
      }
    }
    if (counts.length > 2) {
      x += counts[counts.length - 2]!;
    }
    counts.push(x);
  }
  return counts;
}

export function encodeCounts(counts: number[]): string {
  const chars: string[] = [];
  for (let i = 0; i < counts.length; i++) {
    let x = counts[i]! - (i > 2 ? counts[i - 2]! : 0);
    let more = true;
    while (more) {
      const c = x & 0x1f;
      x >>= 5;
      more = c & 0x10 ? x !== -1 : x !== 0;
      chars.push(String.fromCharCode(48 + (more ? c | 0x20 : c)));
    }
  }
  return chars.join('');
}

export function decodeMask(rle: RLE): Mask {
  const [height, width] = rle.size;
  if (!Number.isInteger(height) || !Number.isInteger(width) || height < 1 || width < 1) {
    throw new RleError(`RLE size must be positive, got ${height}x${width}`);
  }
  const counts = decodeCounts(rle.counts);
  let total = 0;
  for (const c of counts) {
    if (c < 0) throw new RleError('RLE counts decode to a negative run length');
    total += c;
  }
  if (total !== height * width) {
    throw new RleError(
      `RLE counts sum to ${total}, expected ${height * width} for a ${height}x${width} mask`,
    );
  }
  const data = new Uint8Array(width * height);
  let pos = 0; // position in column-major order
  let value = 0;
  for (const count of counts) {
    if (value) {
      for (let i = pos; i < pos + count; i++) {
        const x = Math.floor(i / height);
        const y = i % height;
        data[y * width + x] = 1;
      }
    }
    pos += count;
    value ^= 1;
  }
  return { width, height, data };
}

export function encodeMask(mask: Mask): RLE {
  const { width, height, data } = mask;
  if (data.length !== width * height) {
    throw new RleError(`mask data length ${data.length} does not match ${height}x${width}`);
  }
  const counts: number[] = [];
  let current = 0; // runs start with background
  let run = 0;
  for (let x = 0; x < width; x++) {
    for (let y = 0; y < height; y++) {
      const v = data[y * width + x]! ? 1 : 0;
      if (v === current) {
        run += 1;
      } else {
        counts.push(run);
        current = v;
        run = 1;
      }
    }
  }
  counts.push(run);
  return { size: [height, width], counts: encodeCounts(counts) };
}
