/**
 * Generate one PredictionRecord per input sample from a checkpoint.
 * Output rows match the schema the distill-forge CLI reads back.
 */

import { TrainConfig } from "./config";
import { PredictionRow, readPromptFile, writePredictions } from "./data";
import { StudentModel } from "./model";
import { mulberry32 } from "./rng";
import { loadCheckpointFile } from "./train";

export function predictOnPrompts(
  prompts: Array<{ sampleId: string; prompt: string }>,
  model: StudentModel,
  config: TrainConfig
): PredictionRow[] {
  const rows: PredictionRow[] = [];
  for (const { sampleId, prompt } of prompts) {
    // one rng per sample: output does not depend on file position
    const rng = mulberry32(config.seed ^ hashId(sampleId));
    rows.push({
      sample_id: sampleId,
      epoch: config.predictionEpoch,
      model_tag: `student-${config.modelTag}`,
      output_text: model.generate(prompt, rng),
    });
  }
  return rows;
}

export function predictCommand(inPath: string, outPath: string, config: TrainConfig, checkpointPath: string): number {
  const prompts = readPromptFile(inPath);
  const model = StudentModel.fromCheckpoint(loadCheckpointFile(checkpointPath), config);
  const rows = predictOnPrompts(prompts, model, config);
  writePredictions(outPath, rows);
  return rows.length;
}

/** FNV-1a over the sample id, for a stable per-sample rng seed. */
function hashId(sampleId: string): number {
  let h = 0x811c9dc5;
  for (let i = 0; i < sampleId.length; i++) {
    h ^= sampleId.charCodeAt(i);
    h = Math.imul(h, 0x01000193);
  }
  return h >>> 0;
}
