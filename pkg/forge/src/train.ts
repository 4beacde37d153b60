/**
 * Entry point: train the classifier on freshly generated glyphs, gate on
 * held-out accuracy, and export the model plus seed and probe corpora.
 *
 *   node dist/train.js --out out
 *
 * All randomness derives from --seed, so a rerun with the same arguments
 * reproduces the same artifacts byte for byte.
 */

import { pathToFileURL } from "node:url";

import { makeDataset } from "./dataset.js";
import {
  Adam,
  argmax,
  backward,
  castParams,
  forward,
  loadImage,
  newCache,
  newParams,
  PARAM_KEYS,
  replayLogits,
  zeroParams,
} from "./net.js";
import { exportArtifacts } from "./export.js";
import { Rng } from "./rng.js";

interface Options {
  out: string;
  seed: number;
  trainCount: number;
  testCount: number;
  epochs: number;
  batch: number;
  lr: number;
  seedCount: number;
  probeCount: number;
  minAccuracy: number;
}

const DEFAULTS: Options = {
  out: "out",
  seed: 1234,
  trainCount: 4000,
  testCount: 1000,
  epochs: 4,
  batch: 64,
  lr: 1e-3,
  seedCount: 100,
  probeCount: 10,
  minAccuracy: 0.6,
};

const FLAG_TO_KEY: Record<string, keyof Options> = {
  "--out": "out",
  "--seed": "seed",
  "--train-count": "trainCount",
  "--test-count": "testCount",
  "--epochs": "epochs",
  "--batch": "batch",
  "--lr": "lr",
  "--seed-count": "seedCount",
  "--probe-count": "probeCount",
  "--min-accuracy": "minAccuracy",
};

function usage(): string {
  const lines = ["usage: node dist/train.js [options]", "", "options (with defaults):"];
  for (const [flag, key] of Object.entries(FLAG_TO_KEY)) {
    lines.push(`  ${flag} <value>`.padEnd(26) + String(DEFAULTS[key]));
  }
  return lines.join("\n");
}

export function parseArgs(argv: string[]): Options {
  const opts: Options = { ...DEFAULTS };
  for (let i = 0; i < argv.length; i += 2) {
    const flag = argv[i];
    if (flag === "--help" || flag === "-h") {
      console.log(usage());
      process.exit(0);
    }
    const key = FLAG_TO_KEY[flag];
    if (key === undefined) throw new Error(`unknown option ${flag}\n${usage()}`);
    const value = argv[i + 1];
    if (value === undefined) throw new Error(`missing value for ${flag}`);
    if (key === "out") {
      opts.out = value;
    } else {
      const num = Number(value);
      if (!Number.isFinite(num)) throw new Error(`bad number for ${flag}: ${value}`);
      (opts as unknown as Record<string, number>)[key] = num;
    }
  }
  for (const key of ["trainCount", "testCount", "epochs", "batch", "seedCount"] as const) {
    if (opts[key] < 1 || !Number.isInteger(opts[key])) {
      throw new Error(`${key} must be a positive integer`);
    }
  }
  return opts;
}

function main(): void {
  let opts: Options;
  try {
    opts = parseArgs(process.argv.slice(2));
  } catch (err) {
    console.error((err as Error).message);
    process.exit(2);
  }

  console.log(`generating ${opts.trainCount} train / ${opts.testCount} test samples`);
  const train = makeDataset(opts.trainCount, new Rng(opts.seed));
  const test = makeDataset(opts.testCount, new Rng(opts.seed + 101));

  const params = newParams(new Rng(opts.seed + 202));
  const shuffleRng = new Rng(opts.seed + 303);
  const optimizer = new Adam(opts.lr);
  const cache = newCache();
  const grads = zeroParams();
  const order = new Int32Array(opts.trainCount);
  for (let i = 0; i < order.length; i++) order[i] = i;

  for (let epoch = 0; epoch < opts.epochs; epoch++) {
    const t0 = Date.now();
    shuffleRng.shuffle(order);
    let lossSum = 0;
    for (let start = 0; start < opts.trainCount; start += opts.batch) {
      const end = Math.min(start + opts.batch, opts.trainCount);
      for (const key of PARAM_KEYS) grads[key].fill(0);
      for (let i = start; i < end; i++) {
        const idx = order[i];
        loadImage(train.images[idx], cache.input);
        forward(params, cache);
        lossSum += backward(params, cache, train.labels[idx], grads);
      }
      const scale = 1 / (end - start);
      for (const key of PARAM_KEYS) {
        const g = grads[key];
        for (let i = 0; i < g.length; i++) g[i] *= scale;
      }
      optimizer.step(params, grads);
    }
    const secs = ((Date.now() - t0) / 1000).toFixed(1);
    const meanLoss = (lossSum / opts.trainCount).toFixed(4);
    console.log(`epoch ${epoch + 1}/${opts.epochs}  loss ${meanLoss}  (${secs}s)`);
  }

  // gate on the float32 replay path: this is what the exported file computes
  const exported = castParams(params);
  let correct = 0;
  for (let i = 0; i < opts.testCount; i++) {
    if (argmax(replayLogits(test.images[i], exported)) === test.labels[i]) correct++;
  }
  const accuracy = correct / opts.testCount;
  console.log(`test accuracy ${accuracy.toFixed(4)} (${correct}/${opts.testCount})`);
  if (accuracy < opts.minAccuracy) {
    console.error(`accuracy ${accuracy.toFixed(4)} below gate ${opts.minAccuracy}`);
    process.exit(1);
  }

  const stats = exportArtifacts(
    opts.out,
    exported,
    new Rng(opts.seed + 404),
    opts.seedCount,
    opts.probeCount,
  );
  console.log(
    `wrote model.srmtw, ${stats.seedCount} seeds, ${stats.probeCount} probes ` +
      `to ${opts.out} (${stats.attempts} candidate images drawn)`,
  );
}

// run only when invoked as a script, not when imported by tests
if (process.argv[1] && import.meta.url === pathToFileURL(process.argv[1]).href) {
  main();
}
