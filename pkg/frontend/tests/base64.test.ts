import { describe, expect, it } from "vitest";

import { decodeB64, encodeB64 } from "../src/base64.js";

describe("base64", () => {
  it("matches Buffer encoding for every padding remainder", () => {
    for (const n of [0, 1, 2, 3, 4, 5, 63, 64, 65, 1000]) {
      const bytes = new Uint8Array(n);
      for (let i = 0; i < n; i++) {
        bytes[i] = (i * 37 + 11) & 0xff;
      }
      expect(encodeB64(bytes)).toBe(Buffer.from(bytes).toString("base64"));
    }
  });

  it("round-trips its own output", () => {
    const bytes = new Uint8Array([0, 255, 128, 7, 42, 199, 3]);
    expect(decodeB64(encodeB64(bytes))).toEqual(bytes);
  });

  it("decodes Buffer-produced base64", () => {
    const bytes = new Uint8Array(Array.from({ length: 256 }, (_, i) => i));
    expect(decodeB64(Buffer.from(bytes).toString("base64"))).toEqual(bytes);
  });

  it("rejects characters outside the alphabet", () => {
    expect(() => decodeB64("ab$d")).toThrow(/invalid base64/);
  });
});
