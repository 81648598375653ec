/**
 * Train/predict configuration with size presets.
 *
 * Paper-scale sizes (small/base/large) are presets only; CI uses the tiny
 * stand-in. Adapter rank per preset approximates the published
 * trained-parameter fractions.
 */

import * as fs from "fs";

export interface SizePreset {
  dim: number;
  rank: number;
  maxPromptLen: number;
  maxTargetLen: number;
}

export const SIZE_PRESETS: Record<string, SizePreset> = {
  tiny: { dim: 16, rank: 2, maxPromptLen: 128, maxTargetLen: 48 },
  small: { dim: 64, rank: 4, maxPromptLen: 512, maxTargetLen: 128 },
  base: { dim: 128, rank: 8, maxPromptLen: 768, maxTargetLen: 160 },
  large: { dim: 256, rank: 16, maxPromptLen: 1024, maxTargetLen: 192 },
};

export interface TrainConfig {
  modelTag: string;
  learningRate: number;
  batchSize: number;
  epochsPerCall: number;
  rank: number;
  topP: number;
  seed: number;
  maxPromptLen: number;
  maxTargetLen: number;
  predictionEpoch: number;
  dim: number;
}

export function resolveConfig(raw: Record<string, unknown>): TrainConfig {
  const tag = typeof raw.modelTag === "string" ? raw.modelTag : "small";
  const preset = SIZE_PRESETS[tag];
  if (!preset) {
    const known = Object.keys(SIZE_PRESETS).join(", ");
    throw new Error(`unknown modelTag "${tag}" (expected one of: ${known})`);
  }
  const config: TrainConfig = {
    modelTag: tag,
    learningRate: numberOr(raw.learningRate, 1e-4),
    batchSize: numberOr(raw.batchSize, tag === "large" ? 4 : 8),
    epochsPerCall: numberOr(raw.epochsPerCall, 1),
    rank: numberOr(raw.rank, preset.rank),
    topP: numberOr(raw.topP, 0.9),
    seed: numberOr(raw.seed, 0),
    maxPromptLen: numberOr(raw.maxPromptLen, preset.maxPromptLen),
    maxTargetLen: numberOr(raw.maxTargetLen, preset.maxTargetLen),
    predictionEpoch: numberOr(raw.predictionEpoch, 1),
    dim: preset.dim,
  };
  if (!(config.learningRate > 0)) throw new Error("learningRate must be > 0");
  if (!(config.batchSize >= 1)) throw new Error("batchSize must be >= 1");
  if (!(config.epochsPerCall >= 1)) throw new Error("epochsPerCall must be >= 1");
  if (!(config.rank >= 1)) throw new Error("rank must be >= 1");
  if (!(config.topP > 0 && config.topP <= 1)) throw new Error("topP must be in (0, 1]");
  return config;
}

export function loadConfig(path: string): TrainConfig {
  let raw: unknown;
  try {
    raw = JSON.parse(fs.readFileSync(path, "utf-8"));
  } catch (err) {
    throw new Error(`cannot read config ${path}: ${(err as Error).message}`);
  }
  if (typeof raw !== "object" || raw === null || Array.isArray(raw)) {
    throw new Error(`config ${path} must be a JSON object`);
  }
  return resolveConfig(raw as Record<string, unknown>);
}

function numberOr(value: unknown, fallback: number): number {
  if (value === undefined || value === null) return fallback;
  if (typeof value !== "number" || !Number.isFinite(value)) {
    throw new Error(`expected a finite number, got ${JSON.stringify(value)}`);
  }
  return value;
}
