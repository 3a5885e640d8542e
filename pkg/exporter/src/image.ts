/** Minimal raster decoding: binary PPM (P6) and PGM (P5). */

import { readFileSync } from "node:fs";

export interface Image {
  width: number;
  height: number;
  /** RGB interleaved, values in [0, 1], length width*height*3. */
  pixels: Float64Array;
}

function parseHeader(raw: Buffer): { magic: string; dims: number[]; offset: number } {
  // magic, whitespace-separated numbers, comments starting with '#'
  let offset = 0;
  const readToken = (): string => {
    while (offset < raw.length) {
      const ch = raw[offset];
      if (ch === 0x23) {
        while (offset < raw.length && raw[offset] !== 0x0a) offset++;
      } else if (ch === 0x20 || ch === 0x09 || ch === 0x0a || ch === 0x0d) {
        offset++;
      } else {
        break;
      }
    }
    const start = offset;
    while (offset < raw.length && !/\s/.test(String.fromCharCode(raw[offset]))) offset++;
    return raw.toString("ascii", start, offset);
  };
  const magic = readToken();
  const dims = [Number(readToken()), Number(readToken()), Number(readToken())];
  offset++; // single whitespace after maxval
  return { magic, dims, offset };
}

export function readImage(path: string): Image {
  const raw = readFileSync(path);
  const { magic, dims, offset } = parseHeader(raw);
  const [width, height, maxval] = dims;
  if (!Number.isFinite(width) || !Number.isFinite(height) || maxval <= 0) {
    throw new Error(`${path}: malformed raster header`);
  }
  const pixels = new Float64Array(width * height * 3);
  if (magic === "P6") {
    if (raw.length < offset + width * height * 3) throw new Error(`${path}: truncated P6 data`);
    for (let i = 0; i < width * height * 3; i++) pixels[i] = raw[offset + i] / maxval;
  } else if (magic === "P5") {
    if (raw.length < offset + width * height) throw new Error(`${path}: truncated P5 data`);
    for (let i = 0; i < width * height; i++) {
      const value = raw[offset + i] / maxval;
      pixels[3 * i] = value;
      pixels[3 * i + 1] = value;
      pixels[3 * i + 2] = value;
    }
  } else {
    throw new Error(`${path}: unsupported raster magic ${magic} (need P5 or P6)`);
  }
  return { width, height, pixels };
}

/** Writer used to build test fixtures. */
export function encodePpm(width: number, height: number, rgb: Uint8Array): Buffer {
  if (rgb.length !== width * height * 3) throw new Error("pixel buffer size mismatch");
  const header = Buffer.from(`P6\n${width} ${height}\n255\n`, "ascii");
  return Buffer.concat([header, Buffer.from(rgb)]);
}
