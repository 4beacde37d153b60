/**
 * Synthetic grayscale glyph dataset: ten shape classes rendered at random
 * position, scale, and brightness on a 32x32 canvas, with additive pixel
 * noise. Images are quantized to uint8 so the training distribution matches
 * exactly what an 8-bit PNG on disk can carry.
 */

import { Rng } from "./rng.js";

export const SIZE = 32;
export const NUM_CLASSES = 10;

export const CLASS_NAMES = [
  "disk",
  "ring",
  "square",
  "frame",
  "triangle",
  "plus",
  "cross",
  "h_bar",
  "v_bar",
  "dots",
] as const;

export interface Dataset {
  /** One Uint8Array of SIZE*SIZE pixels per sample, row-major. */
  images: Uint8Array[];
  labels: Int32Array;
}

function inShape(cls: number, dy: number, dx: number, r: number): boolean {
  const d2 = dy * dy + dx * dx;
  switch (cls) {
    case 0:
      return d2 <= r * r;
    case 1: {
      const inner = r - 2.5;
      return d2 <= r * r && d2 >= inner * inner;
    }
    case 2: {
      const half = 0.85 * r;
      return Math.abs(dy) <= half && Math.abs(dx) <= half;
    }
    case 3: {
      const half = 0.85 * r;
      const inner = half - 2.5;
      const outside = Math.abs(dy) <= half && Math.abs(dx) <= half;
      const inside = Math.abs(dy) <= inner && Math.abs(dx) <= inner;
      return outside && !inside;
    }
    case 4: {
      const h = 1.7 * r;
      const relY = dy + h / 2;
      const width = Math.max(relY, 0) * 0.8;
      return relY >= 0 && relY <= h && Math.abs(dx) <= width;
    }
    case 5: {
      const arm = Math.max(2.0, 0.33 * r);
      return (
        (Math.abs(dy) <= arm && Math.abs(dx) <= r) ||
        (Math.abs(dx) <= arm && Math.abs(dy) <= r)
      );
    }
    case 6: {
      const inBox = Math.abs(dy) <= r && Math.abs(dx) <= r;
      return inBox && (Math.abs(dy - dx) <= 2.2 || Math.abs(dy + dx) <= 2.2);
    }
    case 7:
      return Math.abs(dy) <= 0.3 * r && Math.abs(dx) <= r;
    case 8:
      return Math.abs(dx) <= 0.3 * r && Math.abs(dy) <= r;
    case 9: {
      const s = 0.62 * r;
      const rr = 0.45 * r;
      const a = (dy - s) * (dy - s) + (dx - s) * (dx - s) <= rr * rr;
      const b = (dy + s) * (dy + s) + (dx + s) * (dx + s) <= rr * rr;
      return a || b;
    }
    default:
      throw new Error(`unknown class ${cls}`);
  }
}

/** Render one glyph of the given class. Returns quantized uint8 pixels. */
export function drawGlyph(cls: number, rng: Rng): Uint8Array {
  const r = rng.uniform(6.0, 9.0);
  const margin = r + 2;
  const cy = rng.uniform(margin, SIZE - margin);
  const cx = rng.uniform(margin, SIZE - margin);
  const fg = rng.uniform(0.7, 1.0);

  const out = new Uint8Array(SIZE * SIZE);
  for (let y = 0; y < SIZE; y++) {
    for (let x = 0; x < SIZE; x++) {
      const base = inShape(cls, y - cy, x - cx, r) ? fg : 0.0;
      let v = base + 0.05 * rng.gauss();
      if (v < 0) v = 0;
      if (v > 1) v = 1;
      out[y * SIZE + x] = Math.round(v * 255);
    }
  }
  return out;
}

/** Generate `count` samples with labels cycling through the classes. */
export function makeDataset(count: number, rng: Rng): Dataset {
  const images: Uint8Array[] = [];
  const labels = new Int32Array(count);
  for (let i = 0; i < count; i++) {
    const cls = i % NUM_CLASSES;
    images.push(drawGlyph(cls, rng));
    labels[i] = cls;
  }
  return { images, labels };
}
