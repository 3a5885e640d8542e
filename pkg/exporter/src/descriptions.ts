/**
 * LLM-backed category description harvesting with an on-disk cache.
 *
 * Reruns reuse the cache (zero network calls on full hits).  Answers are
 * normalized to a single sentence without a trailing period; malformed
 * answers are kept and flagged for manual review, never silently dropped.
 */

import { existsSync, readFileSync, writeFileSync } from "node:fs";

export interface DescriptionRow {
  category: string;
  llm_text: string;
  full_text: string;
}

export interface ReviewRow {
  category: string;
  raw_answer: string;
  reason: string;
}

export interface LlmEndpoint {
  url: string;
  model?: string;
  /** Injection point for tests; defaults to global fetch. */
  fetchFn?: typeof fetch;
  maxRetries?: number;
  /** Base backoff delay in ms (doubles per attempt). */
  backoffMs?: number;
}

export interface PromptTemplate {
  domainDescription: string;
  inContextExamples: Array<[string, string]>;
  answerConstraints: string;
}

export const NATURAL_IMAGE_TEMPLATE: PromptTemplate = {
  domainDescription:
    "You annotate everyday photographs. For a given object category, " +
    "describe its typical shape, size, color and the objects it commonly appears with.",
  inContextExamples: [
    [
      "bicycle",
      "Bicycle is a two-wheeled frame with handlebars and pedals, " +
        "often seen on streets next to cars and riders",
    ],
    [
      "couch",
      "Couch is a wide upholstered seat with cushions and armrests, " +
        "usually placed in living rooms near tables and televisions",
    ],
  ],
  answerConstraints:
    "Answer with exactly one sentence, no list, no trailing period, " +
    "starting with the category name.",
};

export function renderPrompt(template: PromptTemplate, category: string): string {
  if (!category) throw new Error("category must be non-empty");
  const sections = [template.domainDescription];
  if (template.inContextExamples.length > 0) {
    sections.push(
      "Examples:\n" + template.inContextExamples.map(([name, text]) => `${name}: ${text}`).join("\n"),
    );
  }
  if (template.answerConstraints) sections.push(template.answerConstraints);
  sections.push(`Now give one such description for ${category}.`);
  return sections.join("\n\n");
}

export function assembleFullText(llmText: string, category: string): string {
  return `${llmText}. A photo of a ${category}.`;
}

/** Normalize an answer; returns a review reason for malformed ones. */
export function normalizeAnswer(raw: string): { text: string; problem: string | null } {
  let text = raw.trim().replace(/\s+/g, " ");
  while (text.endsWith(".")) text = text.slice(0, -1).trimEnd();
  if (!text) return { text, problem: "empty answer" };
  if (text.includes(". ")) return { text, problem: "multiple sentences" };
  if (text.includes("\n")) return { text, problem: "multi-line answer" };
  return { text, problem: null };
}

const sleep = (ms: number) => new Promise((resolve) => setTimeout(resolve, ms));

async function queryOnce(endpoint: LlmEndpoint, prompt: string): Promise<string> {
  const fetchFn = endpoint.fetchFn ?? fetch;
  const response = await fetchFn(endpoint.url, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify({ model: endpoint.model ?? "default", prompt }),
  });
  if (!response.ok) throw new Error(`LLM endpoint returned ${response.status}`);
  const body = (await response.json()) as { text?: unknown };
  if (typeof body.text !== "string") throw new Error("LLM response missing 'text' field");
  return body.text;
}

async function queryWithBackoff(endpoint: LlmEndpoint, prompt: string): Promise<string> {
  const retries = endpoint.maxRetries ?? 4;
  const base = endpoint.backoffMs ?? 250;
  let lastError: unknown;
  for (let attempt = 0; attempt <= retries; attempt++) {
    try {
      return await queryOnce(endpoint, prompt);
    } catch (error) {
      lastError = error;
      if (attempt < retries) await sleep(base * 2 ** attempt);
    }
  }
  throw lastError;
}

export function loadCache(path: string): DescriptionRow[] {
  if (!existsSync(path)) return [];
  const rows = JSON.parse(readFileSync(path, "utf-8"));
  if (!Array.isArray(rows)) throw new Error(`${path}: description cache must be a JSON array`);
  for (const row of rows) {
    const keys = Object.keys(row).sort().join(",");
    if (keys !== "category,full_text,llm_text") {
      throw new Error(`${path}: bad description row keys [${keys}]`);
    }
  }
  return rows as DescriptionRow[];
}

export function saveCache(path: string, rows: DescriptionRow[]): void {
  writeFileSync(path, JSON.stringify(rows, null, 2));
}

export interface GenerateResult {
  rows: DescriptionRow[];
  review: ReviewRow[];
  networkCalls: number;
}

/**
 * Fetch one description per category, reusing cached rows.  Flagged answers
 * still produce a (normalized) row so downstream tooling keeps working, and
 * are listed in `review` for manual inspection.
 */
export async function generateDescriptions(
  template: PromptTemplate,
  categories: string[],
  endpoint: LlmEndpoint,
  cachePath: string,
): Promise<GenerateResult> {
  const cached = loadCache(cachePath);
  const byCategory = new Map(cached.map((row) => [row.category, row]));
  const review: ReviewRow[] = [];
  let networkCalls = 0;
  for (const category of categories) {
    if (byCategory.has(category)) continue;
    const prompt = renderPrompt(template, category);
    const raw = await queryWithBackoff(endpoint, prompt);
    networkCalls++;
    const { text, problem } = normalizeAnswer(raw);
    if (problem) review.push({ category, raw_answer: raw, reason: problem });
    byCategory.set(category, {
      category,
      llm_text: text,
      full_text: assembleFullText(text, category),
    });
  }
  const rows = categories.map((category) => byCategory.get(category)!);
  saveCache(cachePath, rows);
  return { rows, review, networkCalls };
}
