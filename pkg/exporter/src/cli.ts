/**
 * Exporter CLI.
 *
 *   export-features --labels labels.csv --out DIR [--d 32] [--m 16]
 *                   [--seed 0] [--categories file] [--descriptions cache.json]
 *   generate-descriptions --categories file --endpoint URL --cache cache.json
 *                   [--model NAME] [--review review.json]
 *
 * Image paths in the labels CSV are resolved relative to the CSV file.
 */

import { readFileSync, mkdirSync, writeFileSync } from "node:fs";
import { dirname, join, resolve } from "node:path";

import {
  NATURAL_IMAGE_TEMPLATE,
  generateDescriptions,
  loadCache,
} from "./descriptions.js";
import { GridImageEncoder, HashedTextEncoder } from "./encoder.js";
import { collectCategories, exportFeatures, parseLabelsCsv } from "./export.js";

function parseArgs(argv: string[]): { command: string; options: Map<string, string> } {
  const [command, ...rest] = argv;
  const options = new Map<string, string>();
  for (let i = 0; i < rest.length; i += 2) {
    const key = rest[i];
    if (!key.startsWith("--") || i + 1 >= rest.length) {
      throw new Error(`malformed option near '${key}'`);
    }
    options.set(key.slice(2), rest[i + 1]);
  }
  return { command, options };
}

function readCategoriesFile(path: string): string[] {
  return readFileSync(path, "utf-8")
    .split(/\r?\n/)
    .map((line) => line.trim())
    .filter(Boolean);
}

async function cmdExportFeatures(options: Map<string, string>): Promise<void> {
  const labelsPath = options.get("labels");
  const outDir = options.get("out");
  if (!labelsPath || !outDir) throw new Error("export-features needs --labels and --out");
  const d = Number(options.get("d") ?? 32);
  const m = Number(options.get("m") ?? 16);
  const seed = Number(options.get("seed") ?? 0);
  const rows = parseLabelsCsv(readFileSync(labelsPath, "utf-8"));
  const base = dirname(resolve(labelsPath));
  const images = rows.map((row) => ({ path: join(base, row.path), labels: row.labels }));
  const categories = options.has("categories")
    ? readCategoriesFile(options.get("categories")!)
    : collectCategories(rows);
  const descriptionsFile = options.get("descriptions") ?? null;
  const descriptions = descriptionsFile ? loadCache(descriptionsFile) : [];
  mkdirSync(outDir, { recursive: true });
  const bundle = exportFeatures(
    {
      images,
      categories,
      descriptions,
      descriptionsFile,
      outBundle: join(outDir, "data.sspafb"),
      outManifest: join(outDir, "manifest.json"),
    },
    new GridImageEncoder(d, m, seed),
    new HashedTextEncoder(d, seed),
  );
  console.log(
    `wrote ${join(outDir, "data.sspafb")} (${bundle.x0.length} samples, C=${bundle.c}, M=${bundle.m}, d=${bundle.d})`,
  );
}

async function cmdGenerateDescriptions(options: Map<string, string>): Promise<void> {
  const categoriesPath = options.get("categories");
  const url = options.get("endpoint");
  const cachePath = options.get("cache");
  if (!categoriesPath || !url || !cachePath) {
    throw new Error("generate-descriptions needs --categories, --endpoint and --cache");
  }
  const categories = readCategoriesFile(categoriesPath);
  const result = await generateDescriptions(NATURAL_IMAGE_TEMPLATE, categories, {
    url,
    model: options.get("model"),
  }, cachePath);
  if (result.review.length > 0) {
    const reviewPath = options.get("review") ?? cachePath.replace(/\.json$/, "") + ".review.json";
    writeFileSync(reviewPath, JSON.stringify(result.review, null, 2));
    console.error(`${result.review.length} answers flagged for review -> ${reviewPath}`);
  }
  console.log(
    `${result.rows.length} descriptions in ${cachePath} (${result.networkCalls} network calls)`,
  );
}

export async function main(argv: string[]): Promise<number> {
  try {
    const { command, options } = parseArgs(argv);
    if (command === "export-features") {
      await cmdExportFeatures(options);
      return 0;
    }
    if (command === "generate-descriptions") {
      await cmdGenerateDescriptions(options);
      return 0;
    }
    console.error(`unknown command '${command ?? ""}'; see header comment for usage`);
    return 1;
  } catch (error) {
    console.error(String(error instanceof Error ? error.message : error));
    return 1;
  }
}

const invokedDirectly = process.argv[1]?.endsWith("cli.js") || process.argv[1]?.endsWith("cli.ts");
if (invokedDirectly) {
  main(process.argv.slice(2)).then((code) => {
    process.exitCode = code;
  });
}
