import assert from "node:assert/strict";
import { execFileSync } from "node:child_process";
import { mkdtempSync, readdirSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { test } from "node:test";

import { extractAndExport } from "../cli";
import { makePng } from "./pngFixture";

const VALIDATOR = `
import sys
from semmatch.features import load_interchange
worst = 0
for path in sys.argv[1:]:
    kps, texture, grid = load_interchange(path)
    assert len(kps) <= 2048, f"{path}: {len(kps)} keypoints"
    assert texture.matrix.shape[0] == len(kps)
    worst = max(worst, len(kps))
print(f"validated {len(sys.argv) - 1} files, max keypoints {worst}")
`;


function makeWorkspace(nImages: number): { dir: string; images: string[] } {
  const dir = mkdtempSync(join(tmpdir(), "fixture-extract-"));
  const images: string[] = [];
  for (let i = 0; i < nImages; i++) {
    const path = join(dir, `img${i}.png`);
    writeFileSync(path, makePng(96 + 8 * i, 64 + 4 * i, 1000 + i));
    images.push(path);
  }
  return { dir, images };
}

test("mock exports pass the engine's interchange validator (10 images)", async () => {
  const { dir, images } = makeWorkspace(10);
  const outDir = join(dir, "out");
  const code = await extractAndExport({
    images,
    outDir,
    mock: true,
    maxKeypoints: 2048,
    textureDim: 32,
    semanticChannels: 48,
    longEdge: 896,
    patchSize: 14,
  });
  assert.equal(code, 0);
  const files = readdirSync(outDir)
    .filter((f) => f.endsWith(".scf"))
    .map((f) => join(outDir, f));
  assert.equal(files.length, 10);
  const stdout = execFileSync("python3", ["-c", VALIDATOR, ...files], { encoding: "utf-8" });
  assert.match(stdout, /validated 10 files/);
});

test("per-image failures are reported and exit code is 1", async () => {
  const { dir, images } = makeWorkspace(1);
  const bad = join(dir, "broken.png");
  writeFileSync(bad, Buffer.from("definitely not a png"));
  const outDir = join(dir, "out");
  const code = await extractAndExport({
    images: [images[0], bad],
    outDir,
    mock: true,
    maxKeypoints: 256,
    textureDim: 16,
    semanticChannels: 16,
    longEdge: 448,
    patchSize: 14,
  });
  assert.equal(code, 1);
  const written = readdirSync(outDir).filter((f) => f.endsWith(".scf"));
  assert.equal(written.length, 1);
});

test("real mode without onnxruntime reports a clear error", async () => {
  const { dir, images } = makeWorkspace(1);
  const code = await extractAndExport({
    images,
    outDir: join(dir, "out"),
    mock: false,
    maxKeypoints: 256,
    textureDim: 16,
    semanticChannels: 16,
    longEdge: 448,
    patchSize: 14,
    textureModel: join(dir, "missing_texture.onnx"),
    semanticModel: join(dir, "missing_semantic.onnx"),
  });
  assert.equal(code, 1);
});

test("geometry sidecars from metadata parse in the engine", async () => {
  const { dir, images } = makeWorkspace(2);
  const depth = Buffer.alloc(4 * 4 * 6);
  depth.writeFloatLE(2.5, 0);
  writeFileSync(join(dir, "d1.f32"), depth);
  writeFileSync(join(dir, "d2.f32"), depth);
  const metadata = [
    {
      name: "pair0",
      view1: {
        fx: 100, fy: 100, cx: 3, cy: 2,
        rotation: [1, 0, 0, 0, 1, 0, 0, 0, 1],
        translation: [0, 0, 0],
        depth: "d1.f32", depthHeight: 4, depthWidth: 6,
      },
      view2: {
        fx: 100, fy: 100, cx: 3, cy: 2,
        rotation: [1, 0, 0, 0, 1, 0, 0, 0, 1],
        translation: [0.1, 0, 0],
        depth: "d2.f32", depthHeight: 4, depthWidth: 6,
      },
    },
  ];
  writeFileSync(join(dir, "meta.json"), JSON.stringify(metadata));
  const outDir = join(dir, "out");
  const code = await extractAndExport({
    images,
    outDir,
    mock: true,
    maxKeypoints: 64,
    textureDim: 8,
    semanticChannels: 8,
    longEdge: 448,
    patchSize: 14,
    metadata: join(dir, "meta.json"),
  });
  assert.equal(code, 0);
  const check = `
from semmatch.supervision import load_geometry_sidecar
g1, g2 = load_geometry_sidecar(r"${join(outDir, "pair0.geom")}")
assert g1.depth.shape == (4, 6)
print("sidecar ok")
`;
  const stdout = execFileSync("python3", ["-c", check], { encoding: "utf-8" });
  assert.match(stdout, /sidecar ok/);
});
