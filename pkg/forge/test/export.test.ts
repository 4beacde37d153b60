import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { makeDataset, NUM_CLASSES } from "../src/dataset.js";
import { exportArtifacts } from "../src/export.js";
import {
  Adam,
  argmax,
  backward,
  castParams,
  forward,
  loadImage,
  newCache,
  newParams,
  NetParamsF32,
  PARAM_KEYS,
  replayLogits,
  zeroParams,
  C1,
  C2,
  FLAT,
  HIDDEN,
} from "../src/net.js";
import { decodeGray } from "../src/png.js";
import { parseModel } from "../src/srmtw.js";
import { Rng } from "../src/rng.js";

/** Rebuild replay parameters from a parsed weight blob, consumer style. */
function paramsFromBlob(blob: Float32Array): NetParamsF32 {
  let off = 0;
  const take = (n: number) => {
    const out = blob.slice(off, off + n);
    off += n;
    return out;
  };
  const p: NetParamsF32 = {
    conv1w: take(C1 * 9),
    conv1b: take(C1),
    conv2w: take(C2 * C1 * 9),
    conv2b: take(C2),
    fc1w: take(HIDDEN * FLAT),
    fc1b: take(HIDDEN),
    fc2w: take(10 * HIDDEN),
    fc2b: take(10),
  };
  expect(off).toBe(blob.length);
  return p;
}

describe("exportArtifacts", () => {
  let tmp: string;
  let exported: NetParamsF32;

  beforeAll(() => {
    // a quick real training run so the prediction filter has something to keep
    const count = 1000;
    const data = makeDataset(count, new Rng(60));
    const params = newParams(new Rng(61));
    const optimizer = new Adam(1e-3);
    const cache = newCache();
    const grads = zeroParams();
    for (let epoch = 0; epoch < 3; epoch++) {
      for (let start = 0; start < count; start += 32) {
        const end = Math.min(start + 32, count);
        for (const key of PARAM_KEYS) grads[key].fill(0);
        for (let i = start; i < end; i++) {
          loadImage(data.images[i], cache.input);
          forward(params, cache);
          backward(params, cache, data.labels[i], grads);
        }
        for (const key of PARAM_KEYS) {
          const g = grads[key];
          for (let j = 0; j < g.length; j++) g[j] /= end - start;
        }
        optimizer.step(params, grads);
      }
    }
    exported = castParams(params);
    tmp = fs.mkdtempSync(path.join(os.tmpdir(), "forge-test-"));
    const stats = exportArtifacts(tmp, exported, new Rng(999), 10, 5);
    expect(stats.seedCount).toBe(10);
  }, 120_000);

  afterAll(() => {
    fs.rmSync(tmp, { recursive: true, force: true });
  });

  it("writes a parseable model with the full weight blob", () => {
    const parsed = parseModel(fs.readFileSync(path.join(tmp, "model.srmtw")));
    const desc = parsed.descriptor as { layers: { kind: string }[]; num_classes: number };
    expect(desc.num_classes).toBe(NUM_CLASSES);
    expect(desc.layers.length).toBe(7);
    const expectTotal =
      C1 * 9 + C1 + C2 * C1 * 9 + C2 + HIDDEN * FLAT + HIDDEN + 10 * HIDDEN + 10;
    expect(parsed.blob.length).toBe(expectTotal);
    expect(parsed.blob[0]).toBe(exported.conv1w[0]);
    expect(parsed.blob[C1 * 9]).toBe(exported.conv1b[0]);
    expect(parsed.blob[expectTotal - 1]).toBe(exported.fc2b[9]);
  });

  it("writes a class-balanced manifest whose files all decode", () => {
    const lines = fs
      .readFileSync(path.join(tmp, "seeds", "manifest.csv"), "utf-8")
      .trim()
      .split("\n");
    expect(lines[0]).toBe("filename,class_index");
    expect(lines.length).toBe(11);
    const classes: number[] = [];
    for (const line of lines.slice(1)) {
      const [name, cls] = line.split(",");
      classes.push(Number(cls));
      const img = decodeGray(fs.readFileSync(path.join(tmp, "seeds", name)));
      expect(img.width).toBe(32);
      expect(img.height).toBe(32);
    }
    expect([...classes].sort((a, b) => a - b)).toEqual([0, 1, 2, 3, 4, 5, 6, 7, 8, 9]);
  });

  it("only keeps seeds the exported weights classify correctly", () => {
    const parsed = parseModel(fs.readFileSync(path.join(tmp, "model.srmtw")));
    const replayParams = paramsFromBlob(parsed.blob);
    const lines = fs
      .readFileSync(path.join(tmp, "seeds", "manifest.csv"), "utf-8")
      .trim()
      .split("\n")
      .slice(1);
    for (const line of lines) {
      const [name, cls] = line.split(",");
      const img = decodeGray(fs.readFileSync(path.join(tmp, "seeds", name)));
      const logits = replayLogits(img.pixels, replayParams);
      expect(argmax(logits)).toBe(Number(cls));
    }
  });

  it("records probe logits that replay exactly from the written file", () => {
    const parsed = parseModel(fs.readFileSync(path.join(tmp, "model.srmtw")));
    const replayParams = paramsFromBlob(parsed.blob);
    const sidecar: Record<string, number[]> = JSON.parse(
      fs.readFileSync(path.join(tmp, "probes", "probe_logits.json"), "utf-8"),
    );
    const names = Object.keys(sidecar);
    expect(names.length).toBe(5);
    for (const name of names) {
      const img = decodeGray(fs.readFileSync(path.join(tmp, "probes", name)));
      const logits = replayLogits(img.pixels, replayParams);
      expect(sidecar[name].length).toBe(NUM_CLASSES);
      for (let k = 0; k < NUM_CLASSES; k++) {
        // JSON round-trips doubles exactly, and the replay is deterministic
        expect(logits[k]).toBe(sidecar[name][k]);
      }
    }
  });
});
