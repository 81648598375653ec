/**
 * One training call: exactly epochsPerCall ordered passes over the epoch
 * file with plain SGD and a linear learning-rate decay to zero.
 *
 * The batch order is the file order. The curriculum sampler upstream
 * already decided what the student should see first; shuffling here would
 * erase that, so there is none.
 */

import * as tf from "@tensorflow/tfjs";
import * as fs from "fs";

import { TrainConfig } from "./config";
import { EpochRow, readEpochFile } from "./data";
import { CheckpointData, StudentModel } from "./model";

export interface StepRecord {
  step: number;
  loss: number;
  learningRate: number;
  samples: string[];
}

export interface TrainResult {
  checkpoint: CheckpointData;
  lossCurve: StepRecord[];
}

export function loadCheckpointFile(path: string): CheckpointData {
  let raw: unknown;
  try {
    raw = JSON.parse(fs.readFileSync(path, "utf-8"));
  } catch (err) {
    throw new Error(`cannot read checkpoint ${path}: ${(err as Error).message}`);
  }
  return raw as CheckpointData;
}

export function trainOnRows(rows: EpochRow[], config: TrainConfig, checkpointIn?: CheckpointData): TrainResult {
  const model = checkpointIn ? StudentModel.fromCheckpoint(checkpointIn, config) : StudentModel.fresh(config);

  const batches: EpochRow[][] = [];
  for (let i = 0; i < rows.length; i += config.batchSize) {
    batches.push(rows.slice(i, i + config.batchSize));
  }
  const totalSteps = batches.length * config.epochsPerCall;
  const variables = model.trainableVariables();
  const lossCurve: StepRecord[] = [];

  let stepInCall = 0;
  for (let pass = 0; pass < config.epochsPerCall; pass++) {
    for (const batch of batches) {
      const learningRate = config.learningRate * (1 - stepInCall / totalSteps);
      const lossValue = tf.tidy(() => {
        const { value, grads } = tf.variableGrads(() => model.loss(batch), variables);
        for (const variable of variables) {
          const grad = grads[variable.name];
          if (grad) variable.assign(variable.sub(grad.mul(learningRate)));
        }
        return value.dataSync()[0];
      });
      stepInCall += 1;
      model.step += 1;
      lossCurve.push({
        step: model.step,
        loss: lossValue,
        learningRate,
        samples: batch.map((row) => row.sampleId),
      });
    }
  }
  return { checkpoint: model.toCheckpoint(), lossCurve };
}

export function trainCommand(inPath: string, outPath: string, config: TrainConfig, checkpointPath?: string): TrainResult {
  const rows = readEpochFile(inPath); // validates the whole file before any step
  const checkpointIn = checkpointPath ? loadCheckpointFile(checkpointPath) : undefined;
  const result = trainOnRows(rows, config, checkpointIn);
  fs.writeFileSync(outPath, JSON.stringify(result.checkpoint), "utf-8");
  fs.writeFileSync(lossCurvePath(outPath), JSON.stringify({ steps: result.lossCurve }, null, 2), "utf-8");
  return result;
}

export function lossCurvePath(checkpointOut: string): string {
  return checkpointOut + ".loss.json";
}
