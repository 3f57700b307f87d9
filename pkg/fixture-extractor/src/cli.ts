#!/usr/bin/env node
/**
 * Export SCF1 interchange files (and optional geometry sidecars) from images.
 *
 * Real mode runs ONNX texture/semantic models (see models.ts for the export
 * contract); --mock derives deterministic pseudo-features from each image's
 * content hash so the pipeline can be exercised without any model files.
 * Per-image failures are reported on stderr and the exit code is 1 if any
 * image failed, mirroring the engine CLI's conventions.
 */

import { mkdirSync, readFileSync, writeFileSync } from "node:fs";
import { basename, extname, join } from "node:path";

import { writeSidecars } from "./geometry";
import { probeImageSize } from "./imageSize";
import { DEFAULT_MOCK_OPTIONS, mockFeatures } from "./mock";
import { modelFeatures } from "./models";
import { encodeInterchange } from "./scf";

interface Args {
  images: string[];
  outDir: string;
  mock: boolean;
  maxKeypoints: number;
  textureDim: number;
  semanticChannels: number;
  longEdge: number;
  patchSize: number;
  textureModel?: string;
  semanticModel?: string;
  metadata?: string;
}

function usage(): never {
  process.stderr.write(
    "usage: fixture-extract --out-dir DIR [--mock] [--max-keypoints N] [--texture-dim D]\n" +
      "                       [--semantic-channels C] [--long-edge PX] [--patch PX]\n" +
      "                       [--texture-model M.onnx --semantic-model M.onnx]\n" +
      "                       [--metadata pairs.json] image.png [image2.png ...]\n"
  );
  process.exit(2);
}

function parseArgs(argv: string[]): Args {
  const args: Args = {
    images: [],
    outDir: "",
    mock: false,
    maxKeypoints: DEFAULT_MOCK_OPTIONS.maxKeypoints,
    textureDim: DEFAULT_MOCK_OPTIONS.textureDim,
    semanticChannels: DEFAULT_MOCK_OPTIONS.semanticChannels,
    longEdge: DEFAULT_MOCK_OPTIONS.longEdge,
    patchSize: DEFAULT_MOCK_OPTIONS.patchSize,
  };
  const takeValue = (i: number, flag: string): string => {
    if (i + 1 >= argv.length) {
      process.stderr.write(`error: ${flag} needs a value\n`);
      usage();
    }
    return argv[i + 1];
  };
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    switch (arg) {
      case "--out-dir":
        args.outDir = takeValue(i, arg);
        i++;
        break;
      case "--mock":
        args.mock = true;
        break;
      case "--max-keypoints":
        args.maxKeypoints = Number(takeValue(i, arg));
        i++;
        break;
      case "--texture-dim":
        args.textureDim = Number(takeValue(i, arg));
        i++;
        break;
      case "--semantic-channels":
        args.semanticChannels = Number(takeValue(i, arg));
        i++;
        break;
      case "--long-edge":
        args.longEdge = Number(takeValue(i, arg));
        i++;
        break;
      case "--patch":
        args.patchSize = Number(takeValue(i, arg));
        i++;
        break;
      case "--texture-model":
        args.textureModel = takeValue(i, arg);
        i++;
        break;
      case "--semantic-model":
        args.semanticModel = takeValue(i, arg);
        i++;
        break;
      case "--metadata":
        args.metadata = takeValue(i, arg);
        i++;
        break;
      case "--help":
      case "-h":
        usage();
        break;
      default:
        if (arg.startsWith("-")) {
          process.stderr.write(`error: unknown flag ${arg}\n`);
          usage();
        }
        args.images.push(arg);
    }
  }
  if (!args.outDir || args.images.length === 0) {
    usage();
  }
  if (!args.mock && (!args.textureModel || !args.semanticModel)) {
    process.stderr.write(
      "error: real mode needs --texture-model and --semantic-model (or pass --mock)\n"
    );
    usage();
  }
  if (
    !(args.maxKeypoints > 0) ||
    !(args.textureDim > 0) ||
    !(args.semanticChannels > 0) ||
    !(args.longEdge > 0) ||
    !(args.patchSize > 0)
  ) {
    process.stderr.write("error: numeric options must be positive\n");
    usage();
  }
  return args;
}

export async function extractAndExport(args: Args): Promise<number> {
  mkdirSync(args.outDir, { recursive: true });
  let failed = 0;
  for (const image of args.images) {
    try {
      const bytes = readFileSync(image);
      const bundle = args.mock
        ? (() => {
            const size = probeImageSize(bytes, image);
            return mockFeatures(bytes, size.width, size.height, {
              maxKeypoints: args.maxKeypoints,
              textureDim: args.textureDim,
              semanticChannels: args.semanticChannels,
              longEdge: args.longEdge,
              patchSize: args.patchSize,
            });
          })()
        : await modelFeatures(
            bytes,
            { textureModel: args.textureModel!, semanticModel: args.semanticModel! },
            {
              maxKeypoints: args.maxKeypoints,
              longEdge: args.longEdge,
              patchSize: args.patchSize,
            }
          );
      const out = join(args.outDir, basename(image, extname(image)) + ".scf");
      writeFileSync(out, encodeInterchange(bundle));
      const n = bundle.scores.length;
      process.stdout.write(
        `${image} -> ${out} n=${n} grid=${bundle.gridH}x${bundle.gridW}x${bundle.channels}\n`
      );
    } catch (err) {
      failed += 1;
      process.stderr.write(`error: ${image}: ${err instanceof Error ? err.message : err}\n`);
    }
  }
  if (args.metadata) {
    try {
      for (const path of writeSidecars(args.metadata, args.outDir)) {
        process.stdout.write(`sidecar ${path}\n`);
      }
    } catch (err) {
      failed += 1;
      process.stderr.write(
        `error: metadata ${args.metadata}: ${err instanceof Error ? err.message : err}\n`
      );
    }
  }
  return failed > 0 ? 1 : 0;
}

if (require.main === module) {
  extractAndExport(parseArgs(process.argv.slice(2)))
    .then((code) => process.exit(code))
    .catch((err) => {
      process.stderr.write(`error: ${err instanceof Error ? err.message : err}\n`);
      process.exit(1);
    });
}
