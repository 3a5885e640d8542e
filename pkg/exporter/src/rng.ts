/** Deterministic PRNG utilities so re-exports are byte-identical. */

/** mulberry32: fast seeded 32-bit generator, uniform in [0, 1). */
export function mulberry32(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

/** Standard normal draws via Box-Muller on a seeded uniform stream. */
export function gaussianStream(seed: number): () => number {
  const uniform = mulberry32(seed);
  let spare: number | null = null;
  return () => {
    if (spare !== null) {
      const value = spare;
      spare = null;
      return value;
    }
    let u = 0;
    while (u === 0) u = uniform();
    const v = uniform();
    const radius = Math.sqrt(-2.0 * Math.log(u));
    spare = radius * Math.sin(2.0 * Math.PI * v);
    return radius * Math.cos(2.0 * Math.PI * v);
  };
}

/** FNV-1a 32-bit hash, used to derive stable per-token seeds. */
export function fnv1a(text: string): number {
  let hash = 0x811c9dc5;
  for (let i = 0; i < text.length; i++) {
    hash ^= text.charCodeAt(i);
    hash = Math.imul(hash, 0x01000193);
  }
  return hash >>> 0;
}

/** Seeded gaussian matrix (rows x cols), scaled by 1/sqrt(cols). */
export function projectionMatrix(seed: number, rows: number, cols: number): Float64Array {
  const gauss = gaussianStream(seed);
  const matrix = new Float64Array(rows * cols);
  const scale = 1.0 / Math.sqrt(cols);
  for (let i = 0; i < matrix.length; i++) matrix[i] = gauss() * scale;
  return matrix;
}
