/**
 * SRMTW v1 container writer, plus a reader used by the tests to round-trip
 * what we emit.
 *
 * File layout:
 *
 *   bytes 0..7    magic "SRMTW\0\0\x01" (last byte = container version)
 *   bytes 8..11   little-endian u32: descriptor length n
 *   bytes 12..    n bytes of UTF-8 JSON architecture descriptor
 *   rest          little-endian float32 blob, row-major, each layer's weight
 *                 then bias concatenated in layer order
 *
 * Descriptor offsets are element indices into the blob, not byte offsets.
 */

export const MAGIC = Buffer.from([0x53, 0x52, 0x4d, 0x54, 0x57, 0x00, 0x00, 0x01]);

export interface ConvLayer {
  kind: "conv2d";
  activation: "relu" | "none";
  out_channels: number;
  kernel: [number, number];
  stride: number;
  padding: number;
  weight: Float32Array; // [out_ch, in_ch, kh, kw] row-major
  bias: Float32Array; // [out_ch]
}

export interface DenseLayer {
  kind: "dense";
  activation: "relu" | "none";
  out_features: number;
  weight: Float32Array; // [out_features, in_features] row-major
  bias: Float32Array; // [out_features]
}

export interface PlainLayer {
  kind: "maxpool2x2" | "flatten";
}

export type Layer = ConvLayer | DenseLayer | PlainLayer;

export interface ModelDef {
  inputShape: [number, number, number];
  numClasses: number;
  /** Conv layer index for heat-map extraction; null means "last conv". */
  gradcamTarget: number | null;
  classNames: string[] | null;
  layers: Layer[];
}

function hasParams(layer: Layer): layer is ConvLayer | DenseLayer {
  return layer.kind === "conv2d" || layer.kind === "dense";
}

/** JSON.stringify with recursively sorted object keys, no whitespace. */
export function canonicalJson(value: unknown): string {
  if (Array.isArray(value)) {
    return "[" + value.map(canonicalJson).join(",") + "]";
  }
  if (value !== null && typeof value === "object") {
    const keys = Object.keys(value as Record<string, unknown>).sort();
    const parts = keys.map(
      (k) => JSON.stringify(k) + ":" + canonicalJson((value as Record<string, unknown>)[k]),
    );
    return "{" + parts.join(",") + "}";
  }
  return JSON.stringify(value);
}

export function buildDescriptor(def: ModelDef): Record<string, unknown> {
  const layers: Record<string, unknown>[] = [];
  let offset = 0;
  for (const layer of def.layers) {
    const entry: Record<string, unknown> = { kind: layer.kind };
    if (layer.kind === "conv2d") {
      entry.activation = layer.activation;
      entry.out_channels = layer.out_channels;
      entry.kernel = [layer.kernel[0], layer.kernel[1]];
      entry.stride = layer.stride;
      entry.padding = layer.padding;
    } else if (layer.kind === "dense") {
      entry.activation = layer.activation;
      entry.out_features = layer.out_features;
    }
    if (hasParams(layer)) {
      entry.weight_offset = offset;
      entry.bias_offset = offset + layer.weight.length;
      offset += layer.weight.length + layer.bias.length;
    }
    layers.push(entry);
  }
  return {
    input_shape: def.inputShape,
    num_classes: def.numClasses,
    gradcam_target: def.gradcamTarget,
    class_names: def.classNames,
    layers,
  };
}

export function encodeModel(def: ModelDef): Buffer {
  const descBytes = Buffer.from(canonicalJson(buildDescriptor(def)), "utf-8");
  const header = Buffer.alloc(4);
  header.writeUInt32LE(descBytes.length, 0);

  let elements = 0;
  for (const layer of def.layers) {
    if (hasParams(layer)) elements += layer.weight.length + layer.bias.length;
  }
  const blob = Buffer.alloc(elements * 4);
  let pos = 0;
  for (const layer of def.layers) {
    if (!hasParams(layer)) continue;
    for (const arr of [layer.weight, layer.bias]) {
      for (let i = 0; i < arr.length; i++) {
        blob.writeFloatLE(arr[i], pos);
        pos += 4;
      }
    }
  }
  return Buffer.concat([MAGIC, header, descBytes, blob]);
}

// ---------------------------------------------------------------------------
// reader, for tests

export interface ParsedModel {
  descriptor: Record<string, unknown>;
  descriptorBytes: Buffer;
  blob: Float32Array;
}

export function parseModel(data: Buffer): ParsedModel {
  if (data.length < 12 || !data.subarray(0, 8).equals(MAGIC)) {
    throw new Error("not an SRMTW v1 file");
  }
  const n = data.readUInt32LE(8);
  if (data.length < 12 + n) throw new Error("descriptor truncated");
  const descriptorBytes = data.subarray(12, 12 + n);
  const descriptor = JSON.parse(descriptorBytes.toString("utf-8"));
  const blobBytes = data.subarray(12 + n);
  if (blobBytes.length % 4 !== 0) throw new Error("blob length not a multiple of 4");
  const blob = new Float32Array(blobBytes.length / 4);
  for (let i = 0; i < blob.length; i++) blob[i] = blobBytes.readFloatLE(i * 4);
  return { descriptor, descriptorBytes: Buffer.from(descriptorBytes), blob };
}
