/**
 * Feature export: encode a labeled image list into an SSPA-FB bundle plus a
 * JSON manifest.  Features leave the encoders untransformed (no
 * normalization); the consumer works on raw dot products.
 */

import { writeFileSync } from "node:fs";
import { basename } from "node:path";

import { DescriptionRow } from "./descriptions.js";
import { ImageEncoder, TextEncoder } from "./encoder.js";
import { readImage } from "./image.js";
import { Bundle, writeBundle } from "./sspafb.js";

export interface ExportJob {
  images: Array<{ path: string; labels: string[] }>;
  categories: string[];
  /** Optional harvested descriptions; falls back to the photo template. */
  descriptions?: DescriptionRow[];
  outBundle: string;
  outManifest: string;
  descriptionsFile?: string | null;
}

export function parseLabelsCsv(text: string): Array<{ path: string; labels: string[] }> {
  const rows: Array<{ path: string; labels: string[] }> = [];
  for (const line of text.split(/\r?\n/)) {
    const trimmed = line.trim();
    if (!trimmed || trimmed.startsWith("#")) continue;
    const comma = trimmed.indexOf(",");
    if (comma < 0) throw new Error(`labels CSV row without labels: '${trimmed}'`);
    const path = trimmed.slice(0, comma).trim();
    const labels = trimmed
      .slice(comma + 1)
      .split("|")
      .map((label) => label.trim())
      .filter(Boolean);
    if (labels.length === 0) throw new Error(`image '${path}' has no labels`);
    rows.push({ path, labels });
  }
  return rows;
}

export function collectCategories(rows: Array<{ labels: string[] }>): string[] {
  const seen = new Set<string>();
  for (const row of rows) for (const label of row.labels) seen.add(label);
  return [...seen].sort();
}

export function exportFeatures(
  job: ExportJob,
  imageEncoder: ImageEncoder,
  textEncoder: TextEncoder,
): Bundle {
  if (imageEncoder.d !== textEncoder.d) {
    throw new Error(
      `encoder width mismatch: image ${imageEncoder.d} vs text ${textEncoder.d}`,
    );
  }
  const d = imageEncoder.d;
  const index = new Map(job.categories.map((name, j) => [name, j]));
  const x0: Float64Array[] = [];
  const x: Float64Array[] = [];
  const y: Float64Array[] = [];
  for (const item of job.images) {
    const image = readImage(item.path);
    const encoded = imageEncoder.encode(image);
    if (encoded.x0.length !== d || encoded.patches.length !== imageEncoder.m * d) {
      throw new Error(`${item.path}: encoder output does not match declared width`);
    }
    const labels = new Float64Array(job.categories.length);
    for (const label of item.labels) {
      const j = index.get(label);
      if (j === undefined) throw new Error(`${item.path}: unknown label '${label}'`);
      labels[j] = 1;
    }
    x0.push(encoded.x0);
    x.push(encoded.patches);
    y.push(labels);
  }

  const described = new Map((job.descriptions ?? []).map((row) => [row.category, row.full_text]));
  const tKa = new Float64Array(job.categories.length * d);
  for (let j = 0; j < job.categories.length; j++) {
    const name = job.categories[j];
    const text = described.get(name) ?? `A photo of a ${name}.`;
    tKa.set(textEncoder.encode(text), j * d);
  }

  const bundle: Bundle = {
    c: job.categories.length,
    m: imageEncoder.m,
    d,
    x0,
    x,
    y,
    tKa,
  };
  writeBundle(job.outBundle, bundle);
  const manifest = {
    categories: job.categories,
    descriptions_file: job.descriptionsFile ?? null,
  };
  writeFileSync(job.outManifest, JSON.stringify(manifest, null, 2));
  writeFileSync(
    job.outManifest.replace(/\.json$/, "") + ".provenance.json",
    JSON.stringify(
      {
        image_encoder: imageEncoder.name,
        text_encoder: textEncoder.name,
        patch_source: "grid mean-pooled pixel statistics (pre-projection)",
        images: job.images.map((item) => basename(item.path)),
      },
      null,
      2,
    ),
  );
  return bundle;
}
