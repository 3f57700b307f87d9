/**
 * Geometry sidecar writer: one text file per image pair, plus raw float32
 * depth maps, in the format the matching engine's evaluator reads.
 *
 * Metadata JSON shape (one entry per pair):
 *   { "name": "pair0",
 *     "view1": { "fx":..., "fy":..., "cx":..., "cy":...,
 *                "rotation": [9 row-major], "translation": [3],
 *                "depth": "path/to/depth.f32", "depthHeight": H, "depthWidth": W },
 *     "view2": { ... } }
 */

import { copyFileSync, existsSync, readFileSync, statSync, writeFileSync } from "node:fs";
import { basename, dirname, join, resolve } from "node:path";

interface ViewMeta {
  fx: number;
  fy: number;
  cx: number;
  cy: number;
  rotation: number[];
  translation: number[];
  depth: string;
  depthHeight: number;
  depthWidth: number;
}

export interface PairMeta {
  name: string;
  view1: ViewMeta;
  view2: ViewMeta;
}

function formatView(tag: string, view: ViewMeta, depthName: string): string[] {
  if (view.rotation.length !== 9 || view.translation.length !== 3) {
    throw new Error(`view ${tag}: rotation needs 9 values and translation 3`);
  }
  return [
    `K${tag} ${view.fx} ${view.fy} ${view.cx} ${view.cy}`,
    `R${tag} ${view.rotation.join(" ")}`,
    `t${tag} ${view.translation.join(" ")}`,
    `depth${tag} ${depthName} ${view.depthHeight} ${view.depthWidth}`,
  ];
}

function stageDepth(metaDir: string, outDir: string, view: ViewMeta, fallbackName: string): string {
  const source = resolve(metaDir, view.depth);
  if (!existsSync(source)) {
    throw new Error(`depth file not found: ${view.depth}`);
  }
  const expected = 4 * view.depthHeight * view.depthWidth;
  if (statSync(source).size !== expected) {
    throw new Error(
      `depth file ${view.depth} is ${statSync(source).size} bytes, expected ${expected}`
    );
  }
  const name = basename(view.depth) === basename(source) ? basename(source) : fallbackName;
  copyFileSync(source, join(outDir, name));
  return name;
}

export function writeSidecars(metadataPath: string, outDir: string): string[] {
  const pairs = JSON.parse(readFileSync(metadataPath, "utf-8")) as PairMeta[];
  const metaDir = dirname(resolve(metadataPath));
  const written: string[] = [];
  for (const pair of pairs) {
    const d1 = stageDepth(metaDir, outDir, pair.view1, `${pair.name}_depth1.f32`);
    const d2 = stageDepth(metaDir, outDir, pair.view2, `${pair.name}_depth2.f32`);
    const lines = [
      ...formatView("1", pair.view1, d1),
      ...formatView("2", pair.view2, d2),
    ];
    const path = join(outDir, `${pair.name}.geom`);
    writeFileSync(path, lines.join("\n") + "\n");
    written.push(path);
  }
  return written;
}
