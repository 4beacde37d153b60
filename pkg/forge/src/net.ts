/**
 * A small convolutional classifier, implemented directly on typed arrays.
 *
 * Shape of the network, fixed at compile time:
 *
 *   input 1x32x32
 *   conv 3x3 pad 1 -> 8 ch, relu, maxpool 2x2
 *   conv 3x3 pad 1 -> 16 ch, relu, maxpool 2x2
 *   flatten (16*8*8 = 1024)
 *   dense -> 32, relu
 *   dense -> 10 logits
 *
 * Training runs in float64 for numeric headroom. Export casts weights to
 * float32, and the float32 replay path below recomputes logits from those
 * cast weights so recorded reference outputs describe the exported file,
 * not the training-time weights.
 *
 * Conventions that downstream consumers rely on:
 *   - conv weights are [out_ch, in_ch, ky, kx] row-major
 *   - dense weights are [out_features, in_features] row-major
 *   - flatten is channel-major: feature index = c*H*W + y*W + x
 *   - maxpool ties resolve to the first maximum in row-major window order
 */

import { Rng } from "./rng.js";
import { NUM_CLASSES, SIZE } from "./dataset.js";

export const C1 = 8; // channels after first conv
export const C2 = 16; // channels after second conv
export const HIDDEN = 32;
export const H1 = SIZE / 2; // 16, spatial side after first pool
export const H2 = SIZE / 4; // 8, spatial side after second pool
export const FLAT = C2 * H2 * H2; // 1024

export interface NetParams {
  conv1w: Float64Array; // [C1, 1, 3, 3]
  conv1b: Float64Array; // [C1]
  conv2w: Float64Array; // [C2, C1, 3, 3]
  conv2b: Float64Array; // [C2]
  fc1w: Float64Array; // [HIDDEN, FLAT]
  fc1b: Float64Array; // [HIDDEN]
  fc2w: Float64Array; // [NUM_CLASSES, HIDDEN]
  fc2b: Float64Array; // [NUM_CLASSES]
}

export const PARAM_KEYS: (keyof NetParams)[] = [
  "conv1w",
  "conv1b",
  "conv2w",
  "conv2b",
  "fc1w",
  "fc1b",
  "fc2w",
  "fc2b",
];

export function newParams(rng: Rng): NetParams {
  const he = (arr: Float64Array, fanIn: number) => {
    const std = Math.sqrt(2.0 / fanIn);
    for (let i = 0; i < arr.length; i++) arr[i] = std * rng.gauss();
  };
  const p: NetParams = zeroParams();
  he(p.conv1w, 1 * 9);
  he(p.conv2w, C1 * 9);
  he(p.fc1w, FLAT);
  he(p.fc2w, HIDDEN);
  return p;
}

export function zeroParams(): NetParams {
  return {
    conv1w: new Float64Array(C1 * 1 * 9),
    conv1b: new Float64Array(C1),
    conv2w: new Float64Array(C2 * C1 * 9),
    conv2b: new Float64Array(C2),
    fc1w: new Float64Array(HIDDEN * FLAT),
    fc1b: new Float64Array(HIDDEN),
    fc2w: new Float64Array(NUM_CLASSES * HIDDEN),
    fc2b: new Float64Array(NUM_CLASSES),
  };
}

// ---------------------------------------------------------------------------
// shared layer kernels
//
// Convolution and pooling are written once over plain number arrays and used
// by both the float64 training path and the float32 replay path; `round`
// controls whether each stored output element is squeezed to float32.

type Plane = Float64Array;

export function conv3x3(
  input: Plane,
  inCh: number,
  side: number,
  weight: ArrayLike<number>,
  bias: ArrayLike<number>,
  outCh: number,
  out: Plane,
  round: boolean,
): void {
  for (let o = 0; o < outCh; o++) {
    const wBase = o * inCh * 9;
    for (let y = 0; y < side; y++) {
      for (let x = 0; x < side; x++) {
        let acc = bias[o];
        for (let i = 0; i < inCh; i++) {
          const iBase = i * side * side;
          const wi = wBase + i * 9;
          for (let ky = 0; ky < 3; ky++) {
            const yy = y + ky - 1;
            if (yy < 0 || yy >= side) continue;
            const rowBase = iBase + yy * side;
            const wRow = wi + ky * 3;
            for (let kx = 0; kx < 3; kx++) {
              const xx = x + kx - 1;
              if (xx < 0 || xx >= side) continue;
              acc += weight[wRow + kx] * input[rowBase + xx];
            }
          }
        }
        out[o * side * side + y * side + x] = round ? Math.fround(acc) : acc;
      }
    }
  }
}

/** ReLU in place, returning the same buffer. */
function relu(buf: Plane): Plane {
  for (let i = 0; i < buf.length; i++) if (buf[i] < 0) buf[i] = 0;
  return buf;
}

/**
 * 2x2 stride-2 max pooling. Writes pooled values to `out` and, when `argmax`
 * is given, the flat input index of the first maximum per window.
 */
export function maxpool2(
  input: Plane,
  ch: number,
  side: number,
  out: Plane,
  argmax: Int32Array | null,
): void {
  const half = side / 2;
  for (let c = 0; c < ch; c++) {
    const iBase = c * side * side;
    const oBase = c * half * half;
    for (let y = 0; y < half; y++) {
      for (let x = 0; x < half; x++) {
        let best = -Infinity;
        let bestIdx = -1;
        for (let ky = 0; ky < 2; ky++) {
          for (let kx = 0; kx < 2; kx++) {
            const idx = iBase + (2 * y + ky) * side + (2 * x + kx);
            if (input[idx] > best) {
              best = input[idx];
              bestIdx = idx;
            }
          }
        }
        out[oBase + y * half + x] = best;
        if (argmax) argmax[oBase + y * half + x] = bestIdx;
      }
    }
  }
}

export function dense(
  input: Plane,
  inN: number,
  weight: ArrayLike<number>,
  bias: ArrayLike<number>,
  outN: number,
  out: Plane,
  round: boolean,
): void {
  for (let o = 0; o < outN; o++) {
    let acc = bias[o];
    const base = o * inN;
    for (let i = 0; i < inN; i++) acc += weight[base + i] * input[i];
    out[o] = round ? Math.fround(acc) : acc;
  }
}

// ---------------------------------------------------------------------------
// training path (float64)

/** Activation buffers for one forward pass, reused across samples. */
export interface Cache {
  input: Float64Array; // [1, 32, 32]
  z1: Float64Array; // conv1 pre-relu [C1, 32, 32]
  p1: Float64Array; // pooled [C1, 16, 16]
  arg1: Int32Array;
  z2: Float64Array; // conv2 pre-relu [C2, 16, 16]
  p2: Float64Array; // pooled = flatten input [C2, 8, 8]
  arg2: Int32Array;
  h: Float64Array; // fc1 pre-relu [HIDDEN]
  hr: Float64Array; // fc1 post-relu
  logits: Float64Array; // [NUM_CLASSES]
}

export function newCache(): Cache {
  return {
    input: new Float64Array(SIZE * SIZE),
    z1: new Float64Array(C1 * SIZE * SIZE),
    p1: new Float64Array(C1 * H1 * H1),
    arg1: new Int32Array(C1 * H1 * H1),
    z2: new Float64Array(C2 * H1 * H1),
    p2: new Float64Array(FLAT),
    arg2: new Int32Array(FLAT),
    h: new Float64Array(HIDDEN),
    hr: new Float64Array(HIDDEN),
    logits: new Float64Array(NUM_CLASSES),
  };
}

export function loadImage(pixels: Uint8Array, into: Float64Array): void {
  for (let i = 0; i < pixels.length; i++) into[i] = pixels[i] / 255.0;
}

export function forward(p: NetParams, c: Cache): Float64Array {
  conv3x3(c.input, 1, SIZE, p.conv1w, p.conv1b, C1, c.z1, false);
  const r1 = c.z1.slice();
  relu(r1);
  maxpool2(r1, C1, SIZE, c.p1, c.arg1);
  conv3x3(c.p1, C1, H1, p.conv2w, p.conv2b, C2, c.z2, false);
  const r2 = c.z2.slice();
  relu(r2);
  maxpool2(r2, C2, H1, c.p2, c.arg2);
  dense(c.p2, FLAT, p.fc1w, p.fc1b, HIDDEN, c.h, false);
  c.hr.set(c.h);
  relu(c.hr);
  dense(c.hr, HIDDEN, p.fc2w, p.fc2b, NUM_CLASSES, c.logits, false);
  return c.logits;
}

/** Softmax cross-entropy loss for the cached logits. */
export function crossEntropy(logits: Float64Array, label: number): number {
  let max = -Infinity;
  for (const v of logits) if (v > max) max = v;
  let sum = 0;
  for (const v of logits) sum += Math.exp(v - max);
  return Math.log(sum) - (logits[label] - max);
}

/**
 * Backprop for one sample. Requires `forward` to have just filled `c`.
 * Gradients are accumulated (+=) into `g` so callers can average a batch.
 * Returns the sample loss.
 */
export function backward(
  p: NetParams,
  c: Cache,
  label: number,
  g: NetParams,
): number {
  const loss = crossEntropy(c.logits, label);

  // d loss / d logits = softmax - onehot
  const dLogits = new Float64Array(NUM_CLASSES);
  let max = -Infinity;
  for (const v of c.logits) if (v > max) max = v;
  let sum = 0;
  for (let k = 0; k < NUM_CLASSES; k++) {
    dLogits[k] = Math.exp(c.logits[k] - max);
    sum += dLogits[k];
  }
  for (let k = 0; k < NUM_CLASSES; k++) dLogits[k] /= sum;
  dLogits[label] -= 1;

  // fc2
  const dHr = new Float64Array(HIDDEN);
  for (let o = 0; o < NUM_CLASSES; o++) {
    const grad = dLogits[o];
    g.fc2b[o] += grad;
    const base = o * HIDDEN;
    for (let i = 0; i < HIDDEN; i++) {
      g.fc2w[base + i] += grad * c.hr[i];
      dHr[i] += p.fc2w[base + i] * grad;
    }
  }

  // fc1 relu
  const dH = new Float64Array(HIDDEN);
  for (let i = 0; i < HIDDEN; i++) dH[i] = c.h[i] > 0 ? dHr[i] : 0;

  // fc1
  const dFlat = new Float64Array(FLAT);
  for (let o = 0; o < HIDDEN; o++) {
    const grad = dH[o];
    if (grad === 0) continue;
    g.fc1b[o] += grad;
    const base = o * FLAT;
    for (let i = 0; i < FLAT; i++) {
      g.fc1w[base + i] += grad * c.p2[i];
      dFlat[i] += p.fc1w[base + i] * grad;
    }
  }

  // pool2: route to recorded argmax, then relu mask from z2
  const dR2 = new Float64Array(C2 * H1 * H1);
  for (let i = 0; i < FLAT; i++) dR2[c.arg2[i]] += dFlat[i];
  for (let i = 0; i < dR2.length; i++) if (c.z2[i] <= 0) dR2[i] = 0;

  // conv2: weight grads and input grads
  const dP1 = new Float64Array(C1 * H1 * H1);
  convBackward(c.p1, C1, H1, p.conv2w, C2, dR2, g.conv2w, g.conv2b, dP1);

  // pool1 + relu mask from z1
  const dR1 = new Float64Array(C1 * SIZE * SIZE);
  for (let i = 0; i < dP1.length; i++) dR1[c.arg1[i]] += dP1[i];
  for (let i = 0; i < dR1.length; i++) if (c.z1[i] <= 0) dR1[i] = 0;

  // conv1 weight grads only, input grads are not needed
  convBackward(c.input, 1, SIZE, p.conv1w, C1, dR1, g.conv1w, g.conv1b, null);

  return loss;
}

function convBackward(
  input: Plane,
  inCh: number,
  side: number,
  weight: Float64Array,
  outCh: number,
  dOut: Plane,
  dWeight: Float64Array,
  dBias: Float64Array,
  dInput: Plane | null,
): void {
  for (let o = 0; o < outCh; o++) {
    const wBase = o * inCh * 9;
    const oBase = o * side * side;
    for (let y = 0; y < side; y++) {
      for (let x = 0; x < side; x++) {
        const grad = dOut[oBase + y * side + x];
        if (grad === 0) continue;
        dBias[o] += grad;
        for (let i = 0; i < inCh; i++) {
          const iBase = i * side * side;
          const wi = wBase + i * 9;
          for (let ky = 0; ky < 3; ky++) {
            const yy = y + ky - 1;
            if (yy < 0 || yy >= side) continue;
            const rowBase = iBase + yy * side;
            const wRow = wi + ky * 3;
            for (let kx = 0; kx < 3; kx++) {
              const xx = x + kx - 1;
              if (xx < 0 || xx >= side) continue;
              dWeight[wRow + kx] += grad * input[rowBase + xx];
              if (dInput) dInput[rowBase + xx] += weight[wRow + kx] * grad;
            }
          }
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// optimizer

export class Adam {
  private m: NetParams = zeroParams();
  private v: NetParams = zeroParams();
  private t = 0;

  constructor(
    private lr = 1e-3,
    private beta1 = 0.9,
    private beta2 = 0.999,
    private eps = 1e-8,
  ) {}

  step(p: NetParams, g: NetParams): void {
    this.t += 1;
    const c1 = 1 - Math.pow(this.beta1, this.t);
    const c2 = 1 - Math.pow(this.beta2, this.t);
    for (const key of PARAM_KEYS) {
      const pa = p[key];
      const ga = g[key];
      const ma = this.m[key];
      const va = this.v[key];
      for (let i = 0; i < pa.length; i++) {
        ma[i] = this.beta1 * ma[i] + (1 - this.beta1) * ga[i];
        va[i] = this.beta2 * va[i] + (1 - this.beta2) * ga[i] * ga[i];
        pa[i] -= (this.lr * (ma[i] / c1)) / (Math.sqrt(va[i] / c2) + this.eps);
      }
    }
  }
}

// ---------------------------------------------------------------------------
// float32 replay path
//
// Mirrors what a consumer of the exported file computes: float32 weights and
// activations, with each stored element rounded to float32. Reference logits
// shipped next to the model come from here.

export interface NetParamsF32 {
  conv1w: Float32Array;
  conv1b: Float32Array;
  conv2w: Float32Array;
  conv2b: Float32Array;
  fc1w: Float32Array;
  fc1b: Float32Array;
  fc2w: Float32Array;
  fc2b: Float32Array;
}

export function castParams(p: NetParams): NetParamsF32 {
  return {
    conv1w: Float32Array.from(p.conv1w),
    conv1b: Float32Array.from(p.conv1b),
    conv2w: Float32Array.from(p.conv2w),
    conv2b: Float32Array.from(p.conv2b),
    fc1w: Float32Array.from(p.fc1w),
    fc1b: Float32Array.from(p.fc1b),
    fc2w: Float32Array.from(p.fc2w),
    fc2b: Float32Array.from(p.fc2b),
  };
}

/** Logits for one uint8 image under float32 evaluation semantics. */
export function replayLogits(pixels: Uint8Array, p: NetParamsF32): Float64Array {
  const input = new Float64Array(SIZE * SIZE);
  for (let i = 0; i < pixels.length; i++) {
    input[i] = Math.fround(pixels[i] / 255.0);
  }
  const z1 = new Float64Array(C1 * SIZE * SIZE);
  conv3x3(input, 1, SIZE, p.conv1w, p.conv1b, C1, z1, true);
  relu(z1);
  const p1 = new Float64Array(C1 * H1 * H1);
  maxpool2(z1, C1, SIZE, p1, null);
  const z2 = new Float64Array(C2 * H1 * H1);
  conv3x3(p1, C1, H1, p.conv2w, p.conv2b, C2, z2, true);
  relu(z2);
  const p2 = new Float64Array(FLAT);
  maxpool2(z2, C2, H1, p2, null);
  const h = new Float64Array(HIDDEN);
  dense(p2, FLAT, p.fc1w, p.fc1b, HIDDEN, h, true);
  relu(h);
  const logits = new Float64Array(NUM_CLASSES);
  dense(h, HIDDEN, p.fc2w, p.fc2b, NUM_CLASSES, logits, true);
  return logits;
}

export function argmax(arr: ArrayLike<number>): number {
  let best = 0;
  for (let i = 1; i < arr.length; i++) if (arr[i] > arr[best]) best = i;
  return best;
}
