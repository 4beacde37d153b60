/**
 * Artifact assembly: packs trained weights into a model file and generates
 * the seed and probe corpora that ship next to it.
 *
 * Everything written here is consumed by a separate tool, so formats are
 * fixed contracts:
 *   - model.srmtw            packed float32 weights plus descriptor
 *   - seeds/seed_NNN.png     grayscale inputs, with manifest.csv rows
 *                            "filename,class_index"
 *   - probes/probe_N.png     one input per class where possible
 *   - probes/probe_logits.json   {filename: [logit, ...]} reference outputs
 *
 * Reference logits are recomputed from the float32-cast weights (the replay
 * path), so they describe the file on disk rather than the float64 training
 * state. Seeds are kept only when the replayed prediction matches the label
 * with a comfortable logit margin, so any faithful consumer reproduces the
 * same predictions.
 */

import * as fs from "node:fs";
import * as path from "node:path";

import { CLASS_NAMES, NUM_CLASSES, SIZE, drawGlyph } from "./dataset.js";
import {
  C1,
  C2,
  HIDDEN,
  NetParamsF32,
  argmax,
  replayLogits,
} from "./net.js";
import { encodeGray } from "./png.js";
import { Layer, ModelDef, encodeModel } from "./srmtw.js";
import { Rng } from "./rng.js";

/** Minimum gap between the top logit and the runner-up for a kept seed. */
const SEED_MARGIN = 0.5;

export function modelDef(p: NetParamsF32): ModelDef {
  const layers: Layer[] = [
    {
      kind: "conv2d",
      activation: "relu",
      out_channels: C1,
      kernel: [3, 3],
      stride: 1,
      padding: 1,
      weight: p.conv1w,
      bias: p.conv1b,
    },
    { kind: "maxpool2x2" },
    {
      kind: "conv2d",
      activation: "relu",
      out_channels: C2,
      kernel: [3, 3],
      stride: 1,
      padding: 1,
      weight: p.conv2w,
      bias: p.conv2b,
    },
    { kind: "maxpool2x2" },
    { kind: "flatten" },
    { kind: "dense", activation: "relu", out_features: HIDDEN, weight: p.fc1w, bias: p.fc1b },
    { kind: "dense", activation: "none", out_features: NUM_CLASSES, weight: p.fc2w, bias: p.fc2b },
  ];
  return {
    inputShape: [1, SIZE, SIZE],
    numClasses: NUM_CLASSES,
    gradcamTarget: null, // consumers default to the last conv layer
    classNames: [...CLASS_NAMES],
    layers,
  };
}

export interface ExportStats {
  seedCount: number;
  probeCount: number;
  attempts: number;
}

/**
 * Write the full artifact set under `outDir`. `rng` drives seed and probe
 * image generation and must be distinct from the training stream.
 */
export function exportArtifacts(
  outDir: string,
  p: NetParamsF32,
  rng: Rng,
  seedCount: number,
  probeCount: number,
): ExportStats {
  fs.mkdirSync(outDir, { recursive: true });
  const seedDir = path.join(outDir, "seeds");
  const probeDir = path.join(outDir, "probes");
  fs.mkdirSync(seedDir, { recursive: true });
  fs.mkdirSync(probeDir, { recursive: true });

  fs.writeFileSync(path.join(outDir, "model.srmtw"), encodeModel(modelDef(p)));

  // seed corpus: class-balanced, prediction-confirmed glyphs
  const perClass = Math.ceil(seedCount / NUM_CLASSES);
  const kept: { pixels: Uint8Array; cls: number }[] = [];
  const classCounts = new Array(NUM_CLASSES).fill(0);
  const maxAttempts = seedCount * 60;
  let attempts = 0;
  let cls = 0;
  while (kept.length < seedCount && attempts < maxAttempts) {
    attempts++;
    cls = (cls + 1) % NUM_CLASSES;
    if (classCounts[cls] >= perClass) continue;
    const pixels = drawGlyph(cls, rng);
    const logits = replayLogits(pixels, p);
    const pred = argmax(logits);
    if (pred !== cls) continue;
    const sorted = Array.from(logits).sort((a, b) => b - a);
    if (sorted[0] - sorted[1] < SEED_MARGIN) continue;
    kept.push({ pixels, cls });
    classCounts[cls]++;
  }
  if (kept.length < seedCount) {
    throw new Error(
      `only ${kept.length} of ${seedCount} seeds passed the prediction filter ` +
        `after ${attempts} attempts`,
    );
  }

  const manifest: string[] = ["filename,class_index"];
  kept.forEach((seed, i) => {
    const name = `seed_${String(i).padStart(3, "0")}.png`;
    fs.writeFileSync(path.join(seedDir, name), encodeGray(seed.pixels, SIZE, SIZE));
    manifest.push(`${name},${seed.cls}`);
  });
  fs.writeFileSync(path.join(seedDir, "manifest.csv"), manifest.join("\n") + "\n");

  // probes: cycle classes so references cover the label space
  const probeLogits: Record<string, number[]> = {};
  for (let i = 0; i < probeCount; i++) {
    const pixels = drawGlyph(i % NUM_CLASSES, rng);
    const name = `probe_${i}.png`;
    fs.writeFileSync(path.join(probeDir, name), encodeGray(pixels, SIZE, SIZE));
    probeLogits[name] = Array.from(replayLogits(pixels, p));
  }
  fs.writeFileSync(
    path.join(probeDir, "probe_logits.json"),
    JSON.stringify(probeLogits, null, 2) + "\n",
  );

  return { seedCount: kept.length, probeCount, attempts };
}
