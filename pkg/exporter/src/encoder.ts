/**
 * Pluggable feature encoders.
 *
 * The default implementations are deterministic stand-ins for a frozen
 * pretrained backbone: a grid-pooling image encoder with a fixed seeded
 * projection, and a hashed bag-of-words text encoder.  Both expose the same
 * interface a real CLIP-backed encoder would, so swapping one in only means
 * implementing these two functions; features are written out untransformed.
 */

import { Image } from "./image.js";
import { fnv1a, gaussianStream, projectionMatrix } from "./rng.js";

export interface ImageEncoder {
  readonly d: number;
  readonly m: number;
  readonly name: string;
  /** Returns { x0 (d), patches (m*d row-major) }. */
  encode(image: Image): { x0: Float64Array; patches: Float64Array };
}

export interface TextEncoder {
  readonly d: number;
  readonly name: string;
  encode(text: string): Float64Array;
}

/** Per-patch raw statistics: mean R/G/B, x, y, contrast, 1. */
const PATCH_STATS = 7;

export class GridImageEncoder implements ImageEncoder {
  readonly name: string;
  private readonly side: number;
  private readonly projection: Float64Array;

  constructor(
    readonly d: number,
    readonly m: number,
    seed = 0,
  ) {
    this.side = Math.round(Math.sqrt(m));
    if (this.side * this.side !== m) {
      throw new Error(`patch count ${m} is not a square grid`);
    }
    this.projection = projectionMatrix(seed ^ 0x5350_4131, PATCH_STATS, d);
    this.name = `grid-mean-pool(side=${this.side}, seed=${seed})`;
  }

  encode(image: Image): { x0: Float64Array; patches: Float64Array } {
    const patches = new Float64Array(this.m * this.d);
    const x0 = new Float64Array(this.d);
    for (let gy = 0; gy < this.side; gy++) {
      for (let gx = 0; gx < this.side; gx++) {
        const stats = this.patchStats(image, gx, gy);
        const row = (gy * this.side + gx) * this.d;
        for (let o = 0; o < this.d; o++) {
          let acc = 0;
          for (let s = 0; s < PATCH_STATS; s++) acc += stats[s] * this.projection[s * this.d + o];
          patches[row + o] = acc;
          x0[o] += acc / this.m;
        }
      }
    }
    return { x0, patches };
  }

  private patchStats(image: Image, gx: number, gy: number): Float64Array {
    const x0 = Math.floor((gx * image.width) / this.side);
    const x1 = Math.floor(((gx + 1) * image.width) / this.side);
    const y0 = Math.floor((gy * image.height) / this.side);
    const y1 = Math.floor(((gy + 1) * image.height) / this.side);
    let r = 0;
    let g = 0;
    let b = 0;
    let sq = 0;
    let count = 0;
    for (let y = y0; y < y1; y++) {
      for (let x = x0; x < x1; x++) {
        const idx = 3 * (y * image.width + x);
        r += image.pixels[idx];
        g += image.pixels[idx + 1];
        b += image.pixels[idx + 2];
        const lum = (image.pixels[idx] + image.pixels[idx + 1] + image.pixels[idx + 2]) / 3;
        sq += lum * lum;
        count++;
      }
    }
    r /= count;
    g /= count;
    b /= count;
    const lumMean = (r + g + b) / 3;
    const contrast = Math.sqrt(Math.max(sq / count - lumMean * lumMean, 0));
    return Float64Array.from([
      r,
      g,
      b,
      (gx + 0.5) / this.side,
      (gy + 0.5) / this.side,
      contrast,
      1.0,
    ]);
  }
}

export class HashedTextEncoder implements TextEncoder {
  readonly name: string;

  constructor(
    readonly d: number,
    private readonly seed = 0,
  ) {
    this.name = `hashed-bag-of-words(seed=${seed})`;
  }

  encode(text: string): Float64Array {
    const tokens = text.toLowerCase().match(/[a-z0-9]+/g) ?? [];
    const out = new Float64Array(this.d);
    if (tokens.length === 0) return out;
    for (const token of tokens) {
      const gauss = gaussianStream(fnv1a(token) ^ this.seed);
      for (let o = 0; o < this.d; o++) out[o] += gauss();
    }
    let norm = 0;
    for (const value of out) norm += value * value;
    norm = Math.sqrt(norm) || 1;
    for (let o = 0; o < this.d; o++) out[o] /= norm;
    return out;
  }
}
