/**
 * ONNX-backed extraction of real texture keypoints/descriptors and a dense
 * semantic map, exported to the SCF1 bundle shape.
 *
 * Model contract (document your exports to match):
 *   texture model:  input  "image"  float32 [1, 1, H, W], values in [0, 1]
 *                   outputs "keypoints" [K, 2] (x, y pixels at original
 *                   resolution), "scores" [K], "descriptors" [K, D]
 *   semantic model: input  "image"  float32 [1, 3, rh, rw], values in [0, 1],
 *                   rh/rw = long-edge resize of the original
 *                   output "tokens" [1, gh * gw, C] or [gh, gw, C], the dense
 *                   patch grid with gh = ceil(rh / patch), gw = ceil(rw / patch)
 *
 * The runtime loads lazily so mock mode never needs onnxruntime-node. PNG
 * rasters decode natively; JPEG raster decoding is out of scope (probe sizes
 * only), so real-model mode requires PNG inputs.
 */

import { DecodedImage, decodePng } from "./png";
import { InterchangeBundle } from "./scf";

export interface ModelPaths {
  textureModel: string;
  semanticModel: string;
}

export interface ModelOptions {
  maxKeypoints: number;
  longEdge: number;
  patchSize: number;
}

type Tensor = { data: Float32Array; dims: readonly number[] };

interface Session {
  run(feeds: Record<string, unknown>): Promise<Record<string, Tensor>>;
  inputNames: readonly string[];
  outputNames: readonly string[];
}

interface OrtModule {
  InferenceSession: { create(path: string): Promise<Session> };
  Tensor: new (type: string, data: Float32Array, dims: number[]) => unknown;
}

let runtime: OrtModule | null = null;

async function loadRuntime(): Promise<OrtModule> {
  if (runtime) {
    return runtime;
  }
  try {
    // deliberately dynamic: mock mode must not require the dependency
    runtime = (await import("onnxruntime-node" as string)) as unknown as OrtModule;
    return runtime;
  } catch {
    throw new Error(
      "onnxruntime-node is not installed; install it to run real models, " +
        "or use --mock for deterministic pseudo-features"
    );
  }
}

function toGray(image: DecodedImage): Float32Array {
  const { width, height, channels, pixels } = image;
  const out = new Float32Array(width * height);
  for (let i = 0; i < width * height; i++) {
    if (channels === 1) {
      out[i] = pixels[i] / 255;
    } else {
      const r = pixels[i * channels];
      const g = pixels[i * channels + 1];
      const b = pixels[i * channels + 2];
      out[i] = (0.299 * r + 0.587 * g + 0.114 * b) / 255;
    }
  }
  return out;
}

function resizeRgbChw(image: DecodedImage, rw: number, rh: number): Float32Array {
  // bilinear, half-pixel centers
  const { width, height, channels, pixels } = image;
  const out = new Float32Array(3 * rh * rw);
  for (let c = 0; c < 3; c++) {
    const src = channels === 1 ? 0 : c;
    for (let y = 0; y < rh; y++) {
      const sy = Math.min(Math.max(((y + 0.5) * height) / rh - 0.5, 0), height - 1);
      const y0 = Math.floor(sy);
      const y1 = Math.min(y0 + 1, height - 1);
      const fy = sy - y0;
      for (let x = 0; x < rw; x++) {
        const sx = Math.min(Math.max(((x + 0.5) * width) / rw - 0.5, 0), width - 1);
        const x0 = Math.floor(sx);
        const x1 = Math.min(x0 + 1, width - 1);
        const fx = sx - x0;
        const at = (yy: number, xx: number) => pixels[(yy * width + xx) * channels + src] / 255;
        const top = at(y0, x0) * (1 - fx) + at(y0, x1) * fx;
        const bottom = at(y1, x0) * (1 - fx) + at(y1, x1) * fx;
        out[c * rh * rw + y * rw + x] = top * (1 - fy) + bottom * fy;
      }
    }
  }
  return out;
}

function pickOutput(outputs: Record<string, Tensor>, preferred: string, session: Session): Tensor {
  if (outputs[preferred]) {
    return outputs[preferred];
  }
  const name = session.outputNames[0];
  if (name && outputs[name]) {
    return outputs[name];
  }
  throw new Error(`model produced no usable output (wanted ${preferred})`);
}

export async function modelFeatures(
  imageBytes: Buffer,
  models: ModelPaths,
  options: ModelOptions
): Promise<InterchangeBundle> {
  const ort = await loadRuntime();
  const image = decodePng(imageBytes, "input");
  const { width, height } = image;

  // texture branch at original resolution
  const textureSession = await ort.InferenceSession.create(models.textureModel);
  const gray = toGray(image);
  const textureOut = await textureSession.run({
    [textureSession.inputNames[0] ?? "image"]: new ort.Tensor("float32", gray, [1, 1, height, width]),
  });
  const kpT = pickOutput(textureOut, "keypoints", textureSession);
  const scoreT = textureOut["scores"];
  const descT = textureOut["descriptors"];
  if (!scoreT || !descT) {
    throw new Error("texture model must output keypoints, scores, and descriptors");
  }
  const total = kpT.dims[kpT.dims.length - 2];
  const dim = descT.dims[descT.dims.length - 1];

  // keep the top maxKeypoints by score, preserving detection order
  const order = Array.from({ length: total }, (_, i) => i)
    .sort((a, b) => scoreT.data[b] - scoreT.data[a])
    .slice(0, options.maxKeypoints)
    .sort((a, b) => a - b);
  const keypoints = new Float32Array(order.length * 2);
  const scores = new Float32Array(order.length);
  const texture = new Float32Array(order.length * dim);
  order.forEach((src, dst) => {
    keypoints[2 * dst] = Math.min(Math.max(kpT.data[2 * src], 0), width - 1e-3);
    keypoints[2 * dst + 1] = Math.min(Math.max(kpT.data[2 * src + 1], 0), height - 1e-3);
    scores[dst] = Math.min(Math.max(scoreT.data[src], 0), 1);
    texture.set(descT.data.subarray(src * dim, (src + 1) * dim), dst * dim);
  });

  // semantic branch at the long-edge resize
  const scale = options.longEdge / Math.max(width, height);
  const rw = Math.max(1, Math.round(width * scale));
  const rh = Math.max(1, Math.round(height * scale));
  const semanticSession = await ort.InferenceSession.create(models.semanticModel);
  const semanticOut = await semanticSession.run({
    [semanticSession.inputNames[0] ?? "image"]: new ort.Tensor(
      "float32",
      resizeRgbChw(image, rw, rh),
      [1, 3, rh, rw]
    ),
  });
  const tokens = pickOutput(semanticOut, "tokens", semanticSession);
  const gridW = Math.ceil(rw / options.patchSize);
  const gridH = Math.ceil(rh / options.patchSize);
  const channels = tokens.dims[tokens.dims.length - 1];
  if (tokens.data.length !== gridH * gridW * channels) {
    throw new Error(
      `semantic tokens have ${tokens.data.length} values, expected ${gridH}x${gridW}x${channels}`
    );
  }

  return {
    width,
    height,
    keypoints,
    scores,
    texture,
    textureDim: dim,
    semantic: Float32Array.from(tokens.data),
    gridH,
    gridW,
    channels,
  };
}
