/**
 * JSONL readers for the schemas shared with the distill-forge CLI.
 *
 * Epoch rows:       {sample_id, prompt, target, gold}
 * Prompt rows:      {sample_id, prompt_text, template_id, token_count_estimate}
 * Prediction rows:  {sample_id, epoch, model_tag, output_text}
 *
 * Validation happens for the whole file up front so a schema problem
 * surfaces before any training step runs.
 */

import * as fs from "fs";

export interface EpochRow {
  sampleId: string;
  prompt: string;
  target: string;
}

export interface PredictionRow {
  sample_id: string;
  epoch: number;
  model_tag: string;
  output_text: string;
}

function parseLines(path: string): Array<{ lineno: number; obj: Record<string, unknown> }> {
  let text: string;
  try {
    text = fs.readFileSync(path, "utf-8");
  } catch (err) {
    throw new Error(`cannot read ${path}: ${(err as Error).message}`);
  }
  const rows: Array<{ lineno: number; obj: Record<string, unknown> }> = [];
  const lines = text.split("\n");
  for (let i = 0; i < lines.length; i++) {
    const line = lines[i].trim();
    if (!line) continue;
    let obj: unknown;
    try {
      obj = JSON.parse(line);
    } catch (err) {
      throw new Error(`${path}:${i + 1}: malformed JSON: ${(err as Error).message}`);
    }
    if (typeof obj !== "object" || obj === null || Array.isArray(obj)) {
      throw new Error(`${path}:${i + 1}: expected a JSON object`);
    }
    rows.push({ lineno: i + 1, obj: obj as Record<string, unknown> });
  }
  return rows;
}

function requireString(obj: Record<string, unknown>, field: string, where: string): string {
  const value = obj[field];
  if (typeof value !== "string") {
    throw new Error(`${where}: field "${field}" missing or not a string`);
  }
  return value;
}

/** Load an epoch dataset, preserving file order exactly. */
export function readEpochFile(path: string): EpochRow[] {
  const out: EpochRow[] = [];
  for (const { lineno, obj } of parseLines(path)) {
    const where = `${path}:${lineno}`;
    out.push({
      sampleId: requireString(obj, "sample_id", where),
      prompt: requireString(obj, "prompt", where),
      target: requireString(obj, "target", where),
    });
  }
  if (out.length === 0) throw new Error(`${path}: epoch dataset is empty`);
  return out;
}

/** Load prompts for prediction; accepts prompt records or epoch rows. */
export function readPromptFile(path: string): Array<{ sampleId: string; prompt: string }> {
  const out: Array<{ sampleId: string; prompt: string }> = [];
  for (const { lineno, obj } of parseLines(path)) {
    const where = `${path}:${lineno}`;
    const sampleId = requireString(obj, "sample_id", where);
    const prompt =
      typeof obj.prompt_text === "string"
        ? obj.prompt_text
        : typeof obj.prompt === "string"
          ? obj.prompt
          : null;
    if (prompt === null) {
      throw new Error(`${where}: expected a "prompt_text" or "prompt" string field`);
    }
    out.push({ sampleId, prompt });
  }
  if (out.length === 0) throw new Error(`${path}: no prompts to predict`);
  return out;
}

export function writePredictions(path: string, rows: PredictionRow[]): void {
  const body = rows.map((row) => JSON.stringify(row)).join("\n") + "\n";
  fs.writeFileSync(path, body, "utf-8");
}
