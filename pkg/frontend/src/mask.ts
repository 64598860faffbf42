import { encodeB64 } from "./base64.js";
import { encodeGrayPng } from "./png.js";

export interface StrokePoint {
  x: number;
  y: number;
}

/**
 * Editable mask layer at image resolution. Brush strokes accumulate soft
 * coverage in [0,1]; submission binarizes at 0.5 so antialiased edges
 * resolve deterministically.
 */
export class MaskLayer {
  readonly width: number;
  readonly height: number;
  readonly coverage: Float32Array;

  constructor(width: number, height: number) {
    if (width < 1 || height < 1) {
      throw new Error(`mask layer needs positive dimensions, got ${width}x${height}`);
    }
    this.width = width;
    this.height = height;
    this.coverage = new Float32Array(width * height);
  }

  stampDisc(cx: number, cy: number, radius: number, erase = false): void {
    const r = Math.max(radius, 0.5);
    const x0 = Math.max(0, Math.floor(cx - r - 1));
    const x1 = Math.min(this.width - 1, Math.ceil(cx + r + 1));
    const y0 = Math.max(0, Math.floor(cy - r - 1));
    const y1 = Math.min(this.height - 1, Math.ceil(cy + r + 1));
    for (let y = y0; y <= y1; y++) {
      for (let x = x0; x <= x1; x++) {
        const d = Math.hypot(x - cx, y - cy);
        const c = Math.min(1, Math.max(0, r + 0.5 - d));
        if (c <= 0) continue;
        const i = y * this.width + x;
        this.coverage[i] = erase ? Math.min(this.coverage[i], 1 - c) : Math.max(this.coverage[i], c);
      }
    }
  }

  /** Stamp discs along the polyline at sub-pixel spacing so strokes stay gap-free. */
  applyStroke(points: StrokePoint[], radius: number, erase = false): void {
    if (points.length === 0) return;
    this.stampDisc(points[0].x, points[0].y, radius, erase);
    for (let i = 1; i < points.length; i++) {
      const a = points[i - 1];
      const b = points[i];
      const steps = Math.max(1, Math.ceil(Math.hypot(b.x - a.x, b.y - a.y)));
      for (let s = 1; s <= steps; s++) {
        const t = s / steps;
        this.stampDisc(a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t, radius, erase);
      }
    }
  }

  clear(): void {
    this.coverage.fill(0);
  }

  fill(): void {
    this.coverage.fill(1);
  }

  binarize(): Uint8Array {
    const out = new Uint8Array(this.coverage.length);
    for (let i = 0; i < out.length; i++) {
      out[i] = this.coverage[i] >= 0.5 ? 1 : 0;
    }
    return out;
  }

  isEmpty(): boolean {
    return !this.binarize().some((v) => v === 1);
  }

  /** Base64 grayscale PNG (0/255) ready for POST /sessions/{id}/masks. */
  toPngB64(): string {
    const bin = this.binarize();
    const bytes = new Uint8Array(bin.length);
    for (let i = 0; i < bin.length; i++) {
      bytes[i] = bin[i] ? 255 : 0;
    }
    return encodeB64(encodeGrayPng(this.width, this.height, bytes));
  }
}
