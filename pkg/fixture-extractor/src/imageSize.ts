/** Header-only width/height probing for PNG and JPEG files. */

export interface ImageSize {
  width: number;
  height: number;
}

export function probeImageSize(data: Buffer, name: string): ImageSize {
  if (data.length >= 24 && data.readUInt32BE(0) === 0x89504e47) {
    // PNG: IHDR is the first chunk after the 8-byte signature
    if (data.toString("ascii", 12, 16) !== "IHDR") {
      throw new Error(`${name}: PNG without leading IHDR chunk`);
    }
    return { width: data.readUInt32BE(16), height: data.readUInt32BE(20) };
  }
  if (data.length >= 4 && data.readUInt16BE(0) === 0xffd8) {
    // JPEG: scan markers for a start-of-frame segment
    let off = 2;
    while (off + 9 < data.length) {
      if (data[off] !== 0xff) {
        off += 1;
        continue;
      }
      const marker = data[off + 1];
      if (marker === 0xd8 || (marker >= 0xd0 && marker <= 0xd9)) {
        off += 2;
        continue;
      }
      const length = data.readUInt16BE(off + 2);
      const isSOF =
        marker >= 0xc0 && marker <= 0xcf && marker !== 0xc4 && marker !== 0xc8 && marker !== 0xcc;
      if (isSOF) {
        return { height: data.readUInt16BE(off + 5), width: data.readUInt16BE(off + 7) };
      }
      off += 2 + length;
    }
    throw new Error(`${name}: JPEG without a start-of-frame marker`);
  }
  throw new Error(`${name}: unsupported image format (need PNG or JPEG)`);
}
