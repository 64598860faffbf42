// Minimal 8-bit grayscale PNG codec. The encoder wraps raw scanlines in
// stored (uncompressed) deflate blocks, which every PNG reader accepts;
// the decoder handles exactly that subset and is used in tests.

const SIGNATURE = [0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a];
const MAX_STORED = 0xffff;

const CRC_TABLE = new Uint32Array(256);
for (let n = 0; n < 256; n++) {
  let c = n;
  for (let k = 0; k < 8; k++) {
    c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
  }
  CRC_TABLE[n] = c >>> 0;
}

export function crc32(bytes: Uint8Array): number {
  let c = 0xffffffff;
  for (let i = 0; i < bytes.length; i++) {
    c = CRC_TABLE[(c ^ bytes[i]) & 0xff] ^ (c >>> 8);
  }
  return (c ^ 0xffffffff) >>> 0;
}

export function adler32(bytes: Uint8Array): number {
  let a = 1;
  let b = 0;
  for (let i = 0; i < bytes.length; i++) {
    a = (a + bytes[i]) % 65521;
    b = (b + a) % 65521;
  }
  return ((b << 16) | a) >>> 0;
}

function writeU32(out: number[], v: number): void {
  out.push((v >>> 24) & 0xff, (v >>> 16) & 0xff, (v >>> 8) & 0xff, v & 0xff);
}

function chunk(out: number[], type: string, data: Uint8Array): void {
  writeU32(out, data.length);
  const body = new Uint8Array(4 + data.length);
  for (let i = 0; i < 4; i++) {
    body[i] = type.charCodeAt(i);
  }
  body.set(data, 4);
  for (const b of body) {
    out.push(b);
  }
  writeU32(out, crc32(body));
}

function zlibStored(raw: Uint8Array): Uint8Array {
  const blocks = Math.max(1, Math.ceil(raw.length / MAX_STORED));
  const out = new Uint8Array(2 + blocks * 5 + raw.length + 4);
  out[0] = 0x78;
  out[1] = 0x01;
  let pos = 2;
  for (let i = 0; i < blocks; i++) {
    const start = i * MAX_STORED;
    const len = Math.min(MAX_STORED, raw.length - start);
    out[pos++] = i === blocks - 1 ? 1 : 0;
    out[pos++] = len & 0xff;
    out[pos++] = (len >> 8) & 0xff;
    out[pos++] = ~len & 0xff;
    out[pos++] = (~len >> 8) & 0xff;
    out.set(raw.subarray(start, start + len), pos);
    pos += len;
  }
  const adler = adler32(raw);
  out[pos++] = (adler >>> 24) & 0xff;
  out[pos++] = (adler >>> 16) & 0xff;
  out[pos++] = (adler >>> 8) & 0xff;
  out[pos++] = adler & 0xff;
  return out;
}

/** Encode 8-bit grayscale pixels (row-major, length width*height) as a PNG. */
export function encodeGrayPng(width: number, height: number, pixels: Uint8Array): Uint8Array {
  if (width < 1 || height < 1 || pixels.length !== width * height) {
    throw new Error(`pixel buffer ${pixels.length} does not match ${width}x${height}`);
  }
  const raw = new Uint8Array((width + 1) * height);
  for (let y = 0; y < height; y++) {
    raw[y * (width + 1)] = 0; // filter type none
    raw.set(pixels.subarray(y * width, (y + 1) * width), y * (width + 1) + 1);
  }
  const ihdr = new Uint8Array(13);
  const dv = new DataView(ihdr.buffer);
  dv.setUint32(0, width);
  dv.setUint32(4, height);
  ihdr[8] = 8; // bit depth
  ihdr[9] = 0; // color type: grayscale
  const out: number[] = [...SIGNATURE];
  chunk(out, "IHDR", ihdr);
  chunk(out, "IDAT", zlibStored(raw));
  chunk(out, "IEND", new Uint8Array(0));
  return new Uint8Array(out);
}

function inflateStored(z: Uint8Array): Uint8Array {
  if (z.length < 6 || (z[0] & 0x0f) !== 8) {
    throw new Error("not a zlib stream");
  }
  const parts: Uint8Array[] = [];
  let pos = 2;
  let final = false;
  let total = 0;
  while (!final) {
    const header = z[pos++];
    final = (header & 1) === 1;
    if ((header >> 1) & 3) {
      throw new Error("decoder only supports stored deflate blocks");
    }
    const len = z[pos] | (z[pos + 1] << 8);
    const nlen = z[pos + 2] | (z[pos + 3] << 8);
    if ((len ^ nlen) !== 0xffff) {
      throw new Error("corrupt stored block length");
    }
    pos += 4;
    parts.push(z.subarray(pos, pos + len));
    pos += len;
    total += len;
  }
  const raw = new Uint8Array(total);
  let n = 0;
  for (const p of parts) {
    raw.set(p, n);
    n += p.length;
  }
  const adler =
    ((z[pos] << 24) | (z[pos + 1] << 16) | (z[pos + 2] << 8) | z[pos + 3]) >>> 0;
  if (adler !== adler32(raw)) {
    throw new Error("zlib checksum mismatch");
  }
  return raw;
}

export interface GrayImage {
  width: number;
  height: number;
  pixels: Uint8Array;
}

/** Decode a PNG produced by encodeGrayPng (8-bit gray, stored deflate, filter 0). */
export function decodeGrayPng(bytes: Uint8Array): GrayImage {
  for (let i = 0; i < 8; i++) {
    if (bytes[i] !== SIGNATURE[i]) {
      throw new Error("missing PNG signature");
    }
  }
  const dv = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  let pos = 8;
  let width = 0;
  let height = 0;
  const idat: Uint8Array[] = [];
  while (pos < bytes.length) {
    const len = dv.getUint32(pos);
    const type = String.fromCharCode(...bytes.subarray(pos + 4, pos + 8));
    const data = bytes.subarray(pos + 8, pos + 8 + len);
    if (type === "IHDR") {
      width = dv.getUint32(pos + 8);
      height = dv.getUint32(pos + 12);
      if (data[8] !== 8 || data[9] !== 0 || data[12] !== 0) {
        throw new Error("decoder only supports 8-bit non-interlaced grayscale");
      }
    } else if (type === "IDAT") {
      idat.push(data);
    } else if (type === "IEND") {
      break;
    }
    pos += 12 + len;
  }
  const zlen = idat.reduce((s, p) => s + p.length, 0);
  const z = new Uint8Array(zlen);
  let n = 0;
  for (const p of idat) {
    z.set(p, n);
    n += p.length;
  }
  const raw = inflateStored(z);
  if (raw.length !== (width + 1) * height) {
    throw new Error(`scanline payload ${raw.length} does not match ${width}x${height}`);
  }
  const pixels = new Uint8Array(width * height);
  for (let y = 0; y < height; y++) {
    if (raw[y * (width + 1)] !== 0) {
      throw new Error("decoder only supports filter type 0");
    }
    pixels.set(raw.subarray(y * (width + 1) + 1, (y + 1) * (width + 1)), y * width);
  }
  return { width, height, pixels };
}
