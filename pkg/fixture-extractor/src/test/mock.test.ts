import assert from "node:assert/strict";
import { test } from "node:test";

import { probeImageSize } from "../imageSize";
import { DEFAULT_MOCK_OPTIONS, mockFeatures, semanticGridSize } from "../mock";
import { decodePng } from "../png";
import { encodeInterchange } from "../scf";
import { makeJpegHeader, makePng } from "./pngFixture";

test("image size probing (png and jpeg)", () => {
  const png = makePng(123, 77, 1);
  assert.deepEqual(probeImageSize(png, "t.png"), { width: 123, height: 77 });
  const jpeg = makeJpegHeader(640, 480);
  assert.deepEqual(probeImageSize(jpeg, "t.jpg"), { width: 640, height: 480 });
  assert.throws(() => probeImageSize(Buffer.from("not an image"), "x.bin"));
});

test("png raster decoding round-trips size and channels", () => {
  const png = makePng(31, 17, 7);
  const decoded = decodePng(png, "t.png");
  assert.equal(decoded.width, 31);
  assert.equal(decoded.height, 17);
  assert.equal(decoded.channels, 3);
  assert.equal(decoded.pixels.length, 31 * 17 * 3);
});

test("mock features are deterministic per image content", () => {
  const image = makePng(320, 240, 3);
  const a = encodeInterchange(mockFeatures(image, 320, 240));
  const b = encodeInterchange(mockFeatures(image, 320, 240));
  assert.ok(a.equals(b));
  const other = encodeInterchange(mockFeatures(makePng(320, 240, 4), 320, 240));
  assert.ok(!a.equals(other));
});

test("mock keypoints respect the cap and image bounds", () => {
  const image = makePng(100, 60, 5);
  const bundle = mockFeatures(image, 100, 60, { ...DEFAULT_MOCK_OPTIONS, maxKeypoints: 50 });
  assert.ok(bundle.scores.length <= 50);
  for (let i = 0; i < bundle.scores.length; i++) {
    const x = bundle.keypoints[2 * i];
    const y = bundle.keypoints[2 * i + 1];
    assert.ok(x >= 0 && x < 100 && y >= 0 && y < 60);
  }
});

test("semantic grid is the ceil-divided patch grid of the resize", () => {
  // 1296x968 at long edge 896: resize 896x669, patches of 14 -> 64x48
  assert.deepEqual(semanticGridSize(1296, 968, 896, 14), { gridW: 64, gridH: 48 });
  const image = makePng(130, 97, 6);
  const bundle = mockFeatures(image, 130, 97);
  const expected = semanticGridSize(130, 97, 896, 14);
  assert.equal(bundle.gridW, expected.gridW);
  assert.equal(bundle.gridH, expected.gridH);
  assert.equal(bundle.channels, 384);
});

test("encoder rejects out-of-bounds keypoints", () => {
  const image = makePng(64, 64, 8);
  const bundle = mockFeatures(image, 64, 64, { ...DEFAULT_MOCK_OPTIONS, maxKeypoints: 32 });
  bundle.keypoints[0] = 64.0;
  assert.throws(() => encodeInterchange(bundle));
});
