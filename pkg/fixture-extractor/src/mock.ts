/**
 * Deterministic pseudo-feature synthesis from an image content hash.
 *
 * Mock mode exists so the export pipeline is testable end-to-end with no
 * model downloads: the same image bytes always produce the same keypoints,
 * descriptors, and dense grid, and every output respects the interchange
 * contract (keypoints inside the image, finite float32 values).
 */

import { createHash } from "node:crypto";

import { InterchangeBundle } from "./scf";

export interface MockOptions {
  maxKeypoints: number;
  textureDim: number;
  semanticChannels: number;
  longEdge: number; // semantic-model input resize target
  patchSize: number; // semantic grid = ceil(resized / patchSize)
}

export const DEFAULT_MOCK_OPTIONS: MockOptions = {
  maxKeypoints: 2048,
  textureDim: 64,
  semanticChannels: 384,
  longEdge: 896,
  patchSize: 14,
};

/** splitmix32: tiny deterministic PRNG, identical on every platform. */
class SplitMix32 {
  private state: number;

  constructor(seed: number) {
    this.state = seed >>> 0;
  }

  nextU32(): number {
    this.state = (this.state + 0x9e3779b9) >>> 0;
    let z = this.state;
    z ^= z >>> 16;
    z = Math.imul(z, 0x21f0aaad);
    z ^= z >>> 15;
    z = Math.imul(z, 0x735a2d97);
    z ^= z >>> 15;
    return z >>> 0;
  }

  uniform(): number {
    // [0, 1)
    return this.nextU32() / 4294967296;
  }

  gaussian(): number {
    // Box-Muller; clamp the log argument away from zero
    const u = Math.max(this.uniform(), 1e-12);
    const v = this.uniform();
    return Math.sqrt(-2.0 * Math.log(u)) * Math.cos(2.0 * Math.PI * v);
  }
}

export function semanticGridSize(
  width: number,
  height: number,
  longEdge: number,
  patchSize: number
): { gridW: number; gridH: number } {
  const scale = longEdge / Math.max(width, height);
  const resizedW = Math.max(1, Math.round(width * scale));
  const resizedH = Math.max(1, Math.round(height * scale));
  return {
    gridW: Math.ceil(resizedW / patchSize),
    gridH: Math.ceil(resizedH / patchSize),
  };
}

export function mockFeatures(
  imageBytes: Buffer,
  width: number,
  height: number,
  options: MockOptions = DEFAULT_MOCK_OPTIONS
): InterchangeBundle {
  const digest = createHash("sha256").update(imageBytes).digest();
  const rng = new SplitMix32(digest.readUInt32LE(0));

  // keypoint count derived from the hash, capped by the job limit
  const span = Math.min(options.maxKeypoints, 2048);
  const base = Math.min(512, span);
  const n = Math.max(16, base + (digest.readUInt32LE(4) % Math.max(1, span - base + 1)));
  const count = Math.min(n, options.maxKeypoints);

  const keypoints = new Float32Array(count * 2);
  const scores = new Float32Array(count);
  for (let i = 0; i < count; i++) {
    keypoints[2 * i] = Math.min(rng.uniform() * width, width - 1e-3);
    keypoints[2 * i + 1] = Math.min(rng.uniform() * height, height - 1e-3);
    scores[i] = rng.uniform();
  }

  const texture = new Float32Array(count * options.textureDim);
  for (let i = 0; i < texture.length; i++) {
    texture[i] = rng.gaussian();
  }

  const { gridW, gridH } = semanticGridSize(width, height, options.longEdge, options.patchSize);
  const semantic = new Float32Array(gridH * gridW * options.semanticChannels);
  for (let i = 0; i < semantic.length; i++) {
    semantic[i] = rng.gaussian();
  }

  return {
    width,
    height,
    keypoints,
    scores,
    texture,
    textureDim: options.textureDim,
    semantic,
    gridH,
    gridW,
    channels: options.semanticChannels,
  };
}
