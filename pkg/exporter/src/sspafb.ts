/**
 * SSPA-FB binary feature bundle, the exact byte layout the recognition head
 * ingests (all little-endian):
 *
 *   magic "SSPA" | u32 version=1 | u32 C | u32 M | u32 d | u32 n
 *   n * (d + M*d + C) float32: per sample [x0 | X row-major | y]
 *   u8 flag | (flag=1) C*d float32 category embeddings
 */

import { writeFileSync, readFileSync } from "node:fs";

export interface Bundle {
  c: number;
  m: number;
  d: number;
  x0: Float64Array[]; // n vectors of length d
  x: Float64Array[]; // n matrices, row-major M*d
  y: Float64Array[]; // n multi-hot vectors of length C
  tKa: Float64Array | null; // row-major C*d
}

const MAGIC = "SSPA";
const VERSION = 1;

export function encodeBundle(bundle: Bundle): Buffer {
  const { c, m, d } = bundle;
  const n = bundle.x0.length;
  if (bundle.x.length !== n || bundle.y.length !== n) {
    throw new Error("inconsistent sample counts");
  }
  const perSample = d + m * d + c;
  const tail = bundle.tKa ? 1 + 4 * c * d : 1;
  const buffer = Buffer.alloc(4 + 20 + 4 * n * perSample + tail);
  let offset = buffer.write(MAGIC, 0, "ascii");
  offset = buffer.writeUInt32LE(VERSION, offset);
  offset = buffer.writeUInt32LE(c, offset);
  offset = buffer.writeUInt32LE(m, offset);
  offset = buffer.writeUInt32LE(d, offset);
  offset = buffer.writeUInt32LE(n, offset);
  for (let i = 0; i < n; i++) {
    const { x0, x, y } = { x0: bundle.x0[i], x: bundle.x[i], y: bundle.y[i] };
    if (x0.length !== d || x.length !== m * d || y.length !== c) {
      throw new Error(`sample ${i}: array sizes do not match header dimensions`);
    }
    for (const value of x0) offset = buffer.writeFloatLE(value, offset);
    for (const value of x) offset = buffer.writeFloatLE(value, offset);
    for (const value of y) {
      if (value !== 0 && value !== 1) throw new Error(`sample ${i}: labels must be 0/1`);
      offset = buffer.writeFloatLE(value, offset);
    }
  }
  if (bundle.tKa) {
    if (bundle.tKa.length !== c * d) {
      throw new Error("category embedding block must be C*d values");
    }
    offset = buffer.writeUInt8(1, offset);
    for (const value of bundle.tKa) offset = buffer.writeFloatLE(value, offset);
  } else {
    offset = buffer.writeUInt8(0, offset);
  }
  for (const block of [bundle.x0, bundle.x, bundle.y]) {
    for (const arr of block) {
      for (const value of arr) {
        if (!Number.isFinite(value)) throw new Error("non-finite feature value");
      }
    }
  }
  return buffer;
}

export function writeBundle(path: string, bundle: Bundle): void {
  writeFileSync(path, encodeBundle(bundle));
}

/** Reader used by the round-trip tests. */
export function readBundle(path: string): Bundle {
  const raw = readFileSync(path);
  if (raw.toString("ascii", 0, 4) !== MAGIC) throw new Error("bad magic");
  if (raw.readUInt32LE(4) !== VERSION) throw new Error("unsupported version");
  const c = raw.readUInt32LE(8);
  const m = raw.readUInt32LE(12);
  const d = raw.readUInt32LE(16);
  const n = raw.readUInt32LE(20);
  let offset = 24;
  const readVec = (length: number) => {
    const out = new Float64Array(length);
    for (let i = 0; i < length; i++) {
      out[i] = raw.readFloatLE(offset);
      offset += 4;
    }
    return out;
  };
  const x0: Float64Array[] = [];
  const x: Float64Array[] = [];
  const y: Float64Array[] = [];
  for (let i = 0; i < n; i++) {
    x0.push(readVec(d));
    x.push(readVec(m * d));
    y.push(readVec(c));
  }
  const flag = raw.readUInt8(offset);
  offset += 1;
  const tKa = flag === 1 ? readVec(c * d) : null;
  return { c, m, d, x0, x, y, tKa };
}
