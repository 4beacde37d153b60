import * as fs from "node:fs";
import * as path from "node:path";
import { fileURLToPath } from "node:url";

import { describe, expect, it } from "vitest";

import { decodeGray, encodeGray } from "../src/png.js";
import { Rng } from "../src/rng.js";

const HERE = path.dirname(fileURLToPath(import.meta.url));

describe("png round trip", () => {
  it("recovers every pixel exactly", () => {
    const rng = new Rng(3);
    const pixels = new Uint8Array(32 * 32);
    for (let i = 0; i < pixels.length; i++) pixels[i] = rng.int(256);
    const decoded = decodeGray(encodeGray(pixels, 32, 32));
    expect(decoded.width).toBe(32);
    expect(decoded.height).toBe(32);
    expect(Buffer.from(decoded.pixels).equals(Buffer.from(pixels))).toBe(true);
  });

  it("handles non-square images", () => {
    const pixels = new Uint8Array([0, 64, 128, 192, 255, 32]);
    const decoded = decodeGray(encodeGray(pixels, 3, 2));
    expect(decoded.width).toBe(3);
    expect(decoded.height).toBe(2);
    expect(Array.from(decoded.pixels)).toEqual([0, 64, 128, 192, 255, 32]);
  });

  it("writes the standard signature and header fields", () => {
    const data = encodeGray(new Uint8Array(4), 2, 2);
    expect(Array.from(data.subarray(0, 8))).toEqual([
      0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a,
    ]);
    // first chunk is IHDR with length 13
    expect(data.readUInt32BE(8)).toBe(13);
    expect(data.subarray(12, 16).toString("ascii")).toBe("IHDR");
    expect(data.readUInt32BE(16)).toBe(2); // width
    expect(data.readUInt32BE(20)).toBe(2); // height
    expect(data[24]).toBe(8); // bit depth
    expect(data[25]).toBe(0); // grayscale
  });

  it("rejects a pixel count that does not match the dimensions", () => {
    expect(() => encodeGray(new Uint8Array(5), 2, 2)).toThrow(/pixel count/);
  });

  it("rejects non-PNG bytes", () => {
    expect(() => decodeGray(Buffer.from("definitely not a png"))).toThrow(/not a PNG/);
  });
});

describe("reading another tool's output", () => {
  // seed images produced by the engine's own encoder live in the repo;
  // decoding one proves the two PNG implementations interoperate
  const fixture = path.resolve(HERE, "../../tests/fixtures/seeds/seed_000.png");

  it.skipIf(!fs.existsSync(fixture))("decodes a committed seed image", () => {
    const decoded = decodeGray(fs.readFileSync(fixture));
    expect(decoded.width).toBe(32);
    expect(decoded.height).toBe(32);
    let max = 0;
    for (const v of decoded.pixels) if (v > max) max = v;
    expect(max).toBeGreaterThan(100);
  });
});
