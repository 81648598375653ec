#!/usr/bin/env node
/**
 * trainer train   --in epoch.jsonl      --out checkpoint.json  --config config.json [--checkpoint prev.json]
 * trainer predict --in prompts.jsonl    --out predictions.jsonl --config config.json --checkpoint checkpoint.json
 *
 * Files in and out are the JSONL schemas defined by the distill-forge
 * pipeline; this process never imports it.
 */

import * as tf from "@tensorflow/tfjs";

import { loadConfig } from "./config";
import { predictCommand } from "./predict";
import { lossCurvePath, trainCommand } from "./train";

interface Args {
  command: string;
  in: string;
  out: string;
  config: string;
  checkpoint?: string;
}

function parseArgs(argv: string[]): Args {
  const [command, ...rest] = argv;
  if (command !== "train" && command !== "predict") {
    throw new Error(`usage: trainer train|predict --in FILE --out FILE --config FILE [--checkpoint FILE]`);
  }
  const flags: Record<string, string> = {};
  for (let i = 0; i < rest.length; i += 2) {
    const key = rest[i];
    const value = rest[i + 1];
    if (!key.startsWith("--") || value === undefined) {
      throw new Error(`malformed arguments near "${key}"`);
    }
    flags[key.slice(2)] = value;
  }
  for (const required of ["in", "out", "config"]) {
    if (!flags[required]) throw new Error(`missing required flag --${required}`);
  }
  return {
    command,
    in: flags["in"],
    out: flags["out"],
    config: flags["config"],
    checkpoint: flags["checkpoint"],
  };
}

async function main(): Promise<number> {
  const args = parseArgs(process.argv.slice(2));
  await tf.setBackend("cpu");
  const config = loadConfig(args.config);

  if (args.command === "train") {
    const result = trainCommand(args.in, args.out, config, args.checkpoint);
    const first = result.lossCurve[0].loss;
    const last = result.lossCurve[result.lossCurve.length - 1].loss;
    console.log(
      `train: ${result.lossCurve.length} steps, loss ${first.toFixed(4)} -> ${last.toFixed(4)}, ` +
        `checkpoint ${args.out}, curve ${lossCurvePath(args.out)}`
    );
    return 0;
  }

  if (!args.checkpoint) throw new Error("predict needs --checkpoint FILE");
  const count = predictCommand(args.in, args.out, config, args.checkpoint);
  console.log(`predict: ${count} records written to ${args.out}`);
  return 0;
}

main()
  .then((code) => process.exit(code))
  .catch((err) => {
    console.error(`error: ${(err as Error).message}`);
    process.exit(1);
  });
