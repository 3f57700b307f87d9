/**
 * Minimal PNG raster decoder: 8-bit grayscale / RGB / RGBA, no interlacing.
 * Enough to feed feature models without an image library dependency.
 */

import { inflateSync } from "node:zlib";

export interface DecodedImage {
  width: number;
  height: number;
  channels: number; // 1, 3, or 4
  pixels: Uint8Array; // row-major, interleaved
}

const SIGNATURE = 0x89504e47;

export function decodePng(data: Buffer, name: string): DecodedImage {
  if (data.length < 8 || data.readUInt32BE(0) !== SIGNATURE) {
    throw new Error(`${name}: not a PNG file`);
  }
  let off = 8;
  let width = 0;
  let height = 0;
  let bitDepth = 0;
  let colorType = 0;
  const idat: Buffer[] = [];
  while (off + 8 <= data.length) {
    const length = data.readUInt32BE(off);
    const kind = data.toString("ascii", off + 4, off + 8);
    const body = data.subarray(off + 8, off + 8 + length);
    if (kind === "IHDR") {
      width = body.readUInt32BE(0);
      height = body.readUInt32BE(4);
      bitDepth = body[8];
      colorType = body[9];
      if (body[12] !== 0) {
        throw new Error(`${name}: interlaced PNG not supported`);
      }
    } else if (kind === "IDAT") {
      idat.push(Buffer.from(body));
    } else if (kind === "IEND") {
      break;
    }
    off += 12 + length;
  }
  if (bitDepth !== 8) {
    throw new Error(`${name}: only 8-bit PNGs supported (got bit depth ${bitDepth})`);
  }
  const channels = { 0: 1, 2: 3, 6: 4 }[colorType as 0 | 2 | 6];
  if (channels === undefined) {
    throw new Error(`${name}: unsupported PNG color type ${colorType}`);
  }
  const raw = inflateSync(Buffer.concat(idat));
  const stride = width * channels;
  const pixels = new Uint8Array(width * height * channels);
  let pos = 0;
  for (let row = 0; row < height; row++) {
    const filter = raw[pos];
    pos += 1;
    const line = raw.subarray(pos, pos + stride);
    pos += stride;
    const out = pixels.subarray(row * stride, (row + 1) * stride);
    const prev = row > 0 ? pixels.subarray((row - 1) * stride, row * stride) : null;
    for (let i = 0; i < stride; i++) {
      const left = i >= channels ? out[i - channels] : 0;
      const up = prev ? prev[i] : 0;
      const upLeft = prev && i >= channels ? prev[i - channels] : 0;
      let value = line[i];
      switch (filter) {
        case 0:
          break;
        case 1:
          value = (value + left) & 0xff;
          break;
        case 2:
          value = (value + up) & 0xff;
          break;
        case 3:
          value = (value + ((left + up) >> 1)) & 0xff;
          break;
        case 4: {
          const p = left + up - upLeft;
          const pa = Math.abs(p - left);
          const pb = Math.abs(p - up);
          const pc = Math.abs(p - upLeft);
          const paeth = pa <= pb && pa <= pc ? left : pb <= pc ? up : upLeft;
          value = (value + paeth) & 0xff;
          break;
        }
        default:
          throw new Error(`${name}: unknown PNG filter ${filter} on row ${row}`);
      }
      out[i] = value;
    }
  }
  return { width, height, channels, pixels };
}
