/**
 * Writer for the "SCF1" interchange container consumed by the matching engine.
 *
 * Layout: magic "SCF1", then u32 LE fields (version=1, W, H, N, D_in, H', W', C),
 * then little-endian float32 arrays packed back-to-back, row-major:
 * keypoints N x 2 (x, y), scores N, texture N x D_in, semantic grid H' x W' x C.
 */

export interface InterchangeBundle {
  width: number;
  height: number;
  keypoints: Float32Array; // N*2 interleaved x,y
  scores: Float32Array; // N
  texture: Float32Array; // N*textureDim
  textureDim: number;
  semantic: Float32Array; // gridH*gridW*channels
  gridH: number;
  gridW: number;
  channels: number;
}

const MAGIC = "SCF1";
const HEADER_BYTES = 4 + 8 * 4;

export function encodeInterchange(bundle: InterchangeBundle): Buffer {
  const n = bundle.scores.length;
  if (bundle.keypoints.length !== n * 2) {
    throw new Error(`keypoints length ${bundle.keypoints.length} != 2*${n}`);
  }
  if (bundle.texture.length !== n * bundle.textureDim) {
    throw new Error("texture array does not match N x D_in");
  }
  if (bundle.semantic.length !== bundle.gridH * bundle.gridW * bundle.channels) {
    throw new Error("semantic array does not match H' x W' x C");
  }
  for (let i = 0; i < n; i++) {
    const x = bundle.keypoints[2 * i];
    const y = bundle.keypoints[2 * i + 1];
    if (!(x >= 0 && x < bundle.width && y >= 0 && y < bundle.height)) {
      throw new Error(`keypoint ${i} (${x}, ${y}) outside [0,${bundle.width}) x [0,${bundle.height})`);
    }
  }

  const payloadFloats =
    bundle.keypoints.length + bundle.scores.length + bundle.texture.length + bundle.semantic.length;
  const buffer = Buffer.alloc(HEADER_BYTES + 4 * payloadFloats);
  buffer.write(MAGIC, 0, "ascii");
  let off = 4;
  for (const value of [
    1,
    bundle.width,
    bundle.height,
    n,
    bundle.textureDim,
    bundle.gridH,
    bundle.gridW,
    bundle.channels,
  ]) {
    buffer.writeUInt32LE(value >>> 0, off);
    off += 4;
  }
  for (const arr of [bundle.keypoints, bundle.scores, bundle.texture, bundle.semantic]) {
    for (let i = 0; i < arr.length; i++) {
      buffer.writeFloatLE(arr[i], off);
      off += 4;
    }
  }
  return buffer;
}
