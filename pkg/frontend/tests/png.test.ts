import * as zlib from "node:zlib";
import { describe, expect, it } from "vitest";

import { adler32, crc32, decodeGrayPng, encodeGrayPng } from "../src/png.js";

function randomPixels(n: number, seed: number): Uint8Array {
  // xorshift keeps the fixture deterministic without pulling in a library
  const out = new Uint8Array(n);
  let s = seed || 1;
  for (let i = 0; i < n; i++) {
    s ^= s << 13;
    s ^= s >>> 17;
    s ^= s << 5;
    out[i] = (s >>> 0) & 0xff;
  }
  return out;
}

function findChunks(png: Uint8Array, type: string): Uint8Array[] {
  const dv = new DataView(png.buffer, png.byteOffset, png.byteLength);
  const chunks: Uint8Array[] = [];
  let pos = 8;
  while (pos < png.length) {
    const len = dv.getUint32(pos);
    const name = String.fromCharCode(...png.subarray(pos + 4, pos + 8));
    if (name === type) {
      chunks.push(png.subarray(pos + 8, pos + 8 + len));
    }
    pos += 12 + len;
  }
  return chunks;
}

describe("crc32 and adler32", () => {
  it("matches node zlib on random buffers", () => {
    for (const seed of [1, 7, 99]) {
      const data = randomPixels(1000 + seed, seed);
      expect(crc32(data)).toBe(zlib.crc32(data));
      // adler32 of the zlib stream trailer equals what deflate writes
      const stream = zlib.deflateSync(data);
      const trailer = stream.subarray(stream.length - 4);
      const expected =
        ((trailer[0] << 24) | (trailer[1] << 16) | (trailer[2] << 8) | trailer[3]) >>> 0;
      expect(adler32(data)).toBe(expected);
    }
  });
});

describe("encodeGrayPng", () => {
  it("starts with the PNG signature", () => {
    const png = encodeGrayPng(4, 4, new Uint8Array(16));
    expect(Array.from(png.subarray(0, 8))).toEqual([0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a]);
  });

  it("rejects a pixel buffer of the wrong size", () => {
    expect(() => encodeGrayPng(4, 4, new Uint8Array(15))).toThrow(/does not match/);
  });

  it("produces an IDAT that node zlib can inflate back to the scanlines", () => {
    const width = 64;
    const height = 64;
    const pixels = randomPixels(width * height, 5);
    const png = encodeGrayPng(width, height, pixels);
    const idat = findChunks(png, "IDAT");
    expect(idat).toHaveLength(1);
    const raw = zlib.inflateSync(idat[0]);
    expect(raw.length).toBe((width + 1) * height);
    for (let y = 0; y < height; y++) {
      expect(raw[y * (width + 1)]).toBe(0);
      const row = new Uint8Array(raw.subarray(y * (width + 1) + 1, (y + 1) * (width + 1)));
      expect(row).toEqual(pixels.slice(y * width, (y + 1) * width));
    }
  });

  it("round-trips through decodeGrayPng at several sizes", () => {
    // 300x300 raw payload exceeds one stored deflate block (65535 bytes)
    for (const [w, h] of [[1, 1], [8, 8], [64, 64], [300, 300], [17, 53]] as const) {
      const pixels = randomPixels(w * h, w * 1000 + h);
      const decoded = decodeGrayPng(encodeGrayPng(w, h, pixels));
      expect(decoded.width).toBe(w);
      expect(decoded.height).toBe(h);
      expect(decoded.pixels).toEqual(pixels);
    }
  });
});

describe("decodeGrayPng", () => {
  it("rejects non-PNG bytes", () => {
    expect(() => decodeGrayPng(new Uint8Array([1, 2, 3, 4, 5, 6, 7, 8]))).toThrow(/signature/);
  });

  it("rejects huffman deflate blocks it cannot parse", () => {
    const png = encodeGrayPng(16, 16, randomPixels(256, 3));
    const idat = findChunks(png, "IDAT")[0];
    idat[2] = 0x03; // flip the stored block header to BTYPE=01 (fixed huffman)
    expect(() => decodeGrayPng(png)).toThrow(/stored deflate/);
  });
});
