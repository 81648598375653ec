/**
 * Tiny seq2seq student with low-rank adapters.
 *
 * The frozen "base" is a random projection stack standing in for a
 * pretrained backbone: mean-pooled prompt embedding as encoder state, a
 * context projection and an output head as decoder. Training touches only
 * the adapter factors (A, B per projection) and the head bias, mirroring
 * an adapter fine-tune where base weights never move.
 */

import * as tf from "@tensorflow/tfjs";

import { TrainConfig } from "./config";
import { gaussianArray, mulberry32, Rng } from "./rng";
import { BOS, EOS, PAD, VOCAB_SIZE, decode, encode } from "./tokenizer";

export interface CheckpointData {
  format: string;
  modelTag: string;
  dim: number;
  rank: number;
  vocabSize: number;
  step: number;
  weights: Record<string, number[]>;
}

const CHECKPOINT_FORMAT = "trainer-checkpoint-v1";

export class StudentModel {
  readonly config: TrainConfig;
  step: number;

  // frozen backbone
  private embed!: tf.Tensor2D; // [V, d]
  private ctxBase!: tf.Tensor2D; // [2d, d]
  private outBase!: tf.Tensor2D; // [d, V]
  // trainable adapter factors and head bias
  private ctxA!: tf.Variable<tf.Rank.R2>;
  private ctxB!: tf.Variable<tf.Rank.R2>;
  private outA!: tf.Variable<tf.Rank.R2>;
  private outB!: tf.Variable<tf.Rank.R2>;
  private outBias!: tf.Variable<tf.Rank.R1>;

  constructor(config: TrainConfig) {
    this.config = config;
    this.step = 0;
  }

  static fresh(config: TrainConfig): StudentModel {
    const model = new StudentModel(config);
    const rng = mulberry32(config.seed);
    const d = config.dim;
    const r = config.rank;
    model.embed = tf.tensor2d(gaussianArray(rng, VOCAB_SIZE * d, 0.1), [VOCAB_SIZE, d]);
    model.ctxBase = tf.tensor2d(gaussianArray(rng, 2 * d * d, 1 / Math.sqrt(2 * d)), [2 * d, d]);
    model.ctxA = tf.variable(tf.tensor2d(gaussianArray(rng, 2 * d * r, 0.02), [2 * d, r]));
    model.ctxB = tf.variable(tf.zeros([r, d])) as tf.Variable<tf.Rank.R2>;
    model.outBase = tf.tensor2d(gaussianArray(rng, d * VOCAB_SIZE, 1 / Math.sqrt(d)), [d, VOCAB_SIZE]);
    model.outA = tf.variable(tf.tensor2d(gaussianArray(rng, d * r, 0.02), [d, r]));
    model.outB = tf.variable(tf.zeros([r, VOCAB_SIZE])) as tf.Variable<tf.Rank.R2>;
    model.outBias = tf.variable(tf.zeros([VOCAB_SIZE])) as tf.Variable<tf.Rank.R1>;
    return model;
  }

  static fromCheckpoint(data: CheckpointData, config: TrainConfig): StudentModel {
    if (data.format !== CHECKPOINT_FORMAT) {
      throw new Error(`unsupported checkpoint format "${data.format}"`);
    }
    if (data.modelTag !== config.modelTag || data.dim !== config.dim || data.rank !== config.rank) {
      throw new Error(
        `checkpoint is for modelTag=${data.modelTag} dim=${data.dim} rank=${data.rank}, ` +
          `config wants modelTag=${config.modelTag} dim=${config.dim} rank=${config.rank}`
      );
    }
    if (data.vocabSize !== VOCAB_SIZE) {
      throw new Error(`checkpoint vocab ${data.vocabSize} != tokenizer vocab ${VOCAB_SIZE}`);
    }
    const model = new StudentModel(config);
    const d = config.dim;
    const r = config.rank;
    const w = (name: string, shape: number[]): tf.Tensor => {
      const values = data.weights[name];
      const size = shape.reduce((a, b) => a * b, 1);
      if (!values || values.length !== size) {
        throw new Error(`checkpoint weight "${name}" missing or wrong size`);
      }
      return tf.tensor(values, shape);
    };
    model.embed = w("embed", [VOCAB_SIZE, d]) as tf.Tensor2D;
    model.ctxBase = w("ctxBase", [2 * d, d]) as tf.Tensor2D;
    model.ctxA = tf.variable(w("ctxA", [2 * d, r])) as tf.Variable<tf.Rank.R2>;
    model.ctxB = tf.variable(w("ctxB", [r, d])) as tf.Variable<tf.Rank.R2>;
    model.outBase = w("outBase", [d, VOCAB_SIZE]) as tf.Tensor2D;
    model.outA = tf.variable(w("outA", [d, r])) as tf.Variable<tf.Rank.R2>;
    model.outB = tf.variable(w("outB", [r, VOCAB_SIZE])) as tf.Variable<tf.Rank.R2>;
    model.outBias = tf.variable(w("outBias", [VOCAB_SIZE])) as tf.Variable<tf.Rank.R1>;
    model.step = data.step;
    return model;
  }

  toCheckpoint(): CheckpointData {
    const dump = (t: tf.Tensor): number[] => Array.from(t.dataSync());
    return {
      format: CHECKPOINT_FORMAT,
      modelTag: this.config.modelTag,
      dim: this.config.dim,
      rank: this.config.rank,
      vocabSize: VOCAB_SIZE,
      step: this.step,
      weights: {
        embed: dump(this.embed),
        ctxBase: dump(this.ctxBase),
        ctxA: dump(this.ctxA),
        ctxB: dump(this.ctxB),
        outBase: dump(this.outBase),
        outA: dump(this.outA),
        outB: dump(this.outB),
        outBias: dump(this.outBias),
      },
    };
  }

  trainableVariables(): tf.Variable[] {
    return [this.ctxA, this.ctxB, this.outA, this.outB, this.outBias];
  }

  /** Mean-pooled prompt embedding, the decoder's conditioning vector. */
  private encodeBatch(promptIds: number[][], maxLen: number): tf.Tensor2D {
    const batch = promptIds.length;
    const flat = new Int32Array(batch * maxLen).fill(PAD);
    const mask = new Float32Array(batch * maxLen);
    for (let b = 0; b < batch; b++) {
      for (let t = 0; t < promptIds[b].length; t++) {
        flat[b * maxLen + t] = promptIds[b][t];
        mask[b * maxLen + t] = 1;
      }
    }
    const ids = tf.tensor2d(flat, [batch, maxLen], "int32");
    const m = tf.tensor2d(mask, [batch, maxLen]);
    const embedded = tf.gather(this.embed, ids); // [B, Lp, d]
    const summed = embedded.mul(m.expandDims(-1)).sum(1) as tf.Tensor2D;
    const counts = m.sum(1).maximum(1).expandDims(-1);
    return summed.div(counts);
  }

  /**
   * Mean cross-entropy over non-pad target characters.
   * Decoder input is BOS-shifted; every row ends with EOS.
   */
  loss(rows: Array<{ prompt: string; target: string }>): tf.Scalar {
    const cfg = this.config;
    const prompts = rows.map((row) => encode(row.prompt, cfg.maxPromptLen));
    const targets = rows.map((row) => {
      const ids = encode(row.target, cfg.maxTargetLen - 1);
      ids.push(EOS);
      return ids;
    });
    const maxPrompt = Math.max(1, ...prompts.map((p) => p.length));
    const maxTarget = Math.max(...targets.map((t) => t.length));
    const batch = rows.length;

    const decInput = new Int32Array(batch * maxTarget).fill(PAD);
    const decTarget = new Int32Array(batch * maxTarget).fill(PAD);
    const decMask = new Float32Array(batch * maxTarget);
    for (let b = 0; b < batch; b++) {
      for (let t = 0; t < targets[b].length; t++) {
        decInput[b * maxTarget + t] = t === 0 ? BOS : targets[b][t - 1];
        decTarget[b * maxTarget + t] = targets[b][t];
        decMask[b * maxTarget + t] = 1;
      }
    }

    const h = this.encodeBatch(prompts, maxPrompt); // [B, d]
    const inputIds = tf.tensor2d(decInput, [batch, maxTarget], "int32");
    const targetIds = tf.tensor1d(decTarget, "int32");
    const mask = tf.tensor1d(decMask);

    const logits = this.logitsFor(inputIds, h); // [B*Lt, V]
    const logProbs = tf.logSoftmax(logits);
    const picked = tf.oneHot(targetIds, VOCAB_SIZE).mul(logProbs).sum(-1).neg();
    return picked.mul(mask).sum().div(mask.sum()) as tf.Scalar;
  }

  private logitsFor(inputIds: tf.Tensor2D, h: tf.Tensor2D): tf.Tensor2D {
    const [batch, steps] = inputIds.shape;
    const d = this.config.dim;
    const eDec = tf.gather(this.embed, inputIds); // [B, Lt, d]
    const hTiled = h.expandDims(1).tile([1, steps, 1]);
    const x = tf.concat([eDec, hTiled], -1).reshape([batch * steps, 2 * d]);
    const ctxW = this.ctxBase.add(this.ctxA.matMul(this.ctxB));
    const z = tf.tanh(x.matMul(ctxW as tf.Tensor2D));
    const outW = this.outBase.add(this.outA.matMul(this.outB));
    return z.matMul(outW as tf.Tensor2D).add(this.outBias) as tf.Tensor2D;
  }

  /** Nucleus-sampled generation; deterministic for a given rng. */
  generate(prompt: string, rng: Rng): string {
    const cfg = this.config;
    const out: number[] = [];
    const result = tf.tidy(() => {
      const h = this.encodeBatch([encode(prompt, cfg.maxPromptLen)], Math.max(1, prompt.length));
      let prev = BOS;
      for (let t = 0; t < cfg.maxTargetLen; t++) {
        const ids = tf.tensor2d([[prev]], [1, 1], "int32");
        const logits = this.logitsFor(ids, h);
        const probs = tf.softmax(logits).dataSync() as Float32Array;
        const next = sampleTopP(probs, cfg.topP, rng());
        if (next === EOS) break;
        out.push(next);
        prev = next;
      }
      return out;
    });
    return decode(result);
  }
}

/** Smallest prefix of the descending-probability list covering topP. */
export function sampleTopP(probs: Float32Array, topP: number, draw: number): number {
  const order = Array.from(probs.keys()).sort((a, b) => probs[b] - probs[a] || a - b);
  let cumulative = 0;
  const nucleus: number[] = [];
  for (const id of order) {
    nucleus.push(id);
    cumulative += probs[id];
    if (cumulative >= topP) break;
  }
  let threshold = draw * cumulative;
  for (const id of nucleus) {
    threshold -= probs[id];
    if (threshold <= 0) return id;
  }
  return nucleus[nucleus.length - 1];
}
