import { describe, expect, it } from "vitest";

import { decodeB64 } from "../src/base64.js";
import { MaskLayer } from "../src/mask.js";
import { decodeGrayPng } from "../src/png.js";

describe("MaskLayer", () => {
  it("a single brush dot sets at least the pixel under it", () => {
    const layer = new MaskLayer(64, 64);
    layer.applyStroke([{ x: 20, y: 30 }], 2);
    const bin = layer.binarize();
    expect(bin[30 * 64 + 20]).toBe(1);
    expect(layer.isEmpty()).toBe(false);
  });

  it("fill produces an all-ones mask", () => {
    const layer = new MaskLayer(16, 16);
    layer.fill();
    expect(layer.binarize().every((v) => v === 1)).toBe(true);
  });

  it("erasing everything leaves an empty layer", () => {
    const layer = new MaskLayer(32, 32);
    layer.applyStroke([{ x: 10, y: 10 }, { x: 20, y: 20 }], 4);
    expect(layer.isEmpty()).toBe(false);
    layer.applyStroke([{ x: 0, y: 0 }, { x: 31, y: 31 }], 40, true);
    expect(layer.isEmpty()).toBe(true);
  });

  it("binarizes at exactly 0.5", () => {
    const layer = new MaskLayer(4, 1);
    layer.coverage[0] = 0.49;
    layer.coverage[1] = 0.5;
    layer.coverage[2] = 0.51;
    expect(Array.from(layer.binarize())).toEqual([0, 1, 1, 0]);
  });

  it("strokes between distant points leave no gaps on the segment", () => {
    const layer = new MaskLayer(64, 64);
    layer.applyStroke([{ x: 5, y: 8 }, { x: 55, y: 40 }], 1.5);
    const bin = layer.binarize();
    for (let t = 0; t <= 1; t += 0.02) {
      const x = Math.round(5 + 50 * t);
      const y = Math.round(8 + 32 * t);
      expect(bin[y * 64 + x]).toBe(1);
    }
  });

  it("encodes a 0/255 grayscale PNG at layer resolution", () => {
    const layer = new MaskLayer(32, 24);
    layer.applyStroke([{ x: 16, y: 12 }], 3);
    const decoded = decodeGrayPng(decodeB64(layer.toPngB64()));
    expect(decoded.width).toBe(32);
    expect(decoded.height).toBe(24);
    expect(decoded.pixels.every((v) => v === 0 || v === 255)).toBe(true);
    const bin = layer.binarize();
    for (let i = 0; i < bin.length; i++) {
      expect(decoded.pixels[i]).toBe(bin[i] ? 255 : 0);
    }
  });
});
