/**
 * Export job: for every manifest entry with a superpixel map, score each
 * segment's masked frame and write an SPSC file (rows in segment-id order),
 * optionally plus a GFEA global-feature file of the full frame.
 */

import * as fs from "node:fs";
import * as path from "node:path";
import * as tf from "@tensorflow/tfjs";

import {
  Manifest,
  SuperpixelMap,
  readManifest,
  readSpxm,
  writeGfea,
  writeSpsc,
} from "./formats.js";
import { FRAME_SIZE, RgbImage, maskedFrame, readPng, resizeBilinear, resizeNearest } from "./image.js";
import { createBackbone, withClassifierHead } from "./model.js";

export interface ExportJob {
  manifestPath: string;
  spxmDir: string;
  outDir: string;
  nClasses: number;
  mainK: number;
  features: boolean;
  modelDir?: string;
  seed?: number;
  split?: "train" | "test" | "all";
}

export interface ExportModels {
  classifier: tf.LayersModel;
  backbone: tf.LayersModel;
}

export async function buildModels(job: ExportJob): Promise<ExportModels> {
  let backbone: tf.LayersModel;
  if (job.modelDir) {
    const { loadModelFromDir } = await import("./model.js");
    backbone = await loadModelFromDir(job.modelDir);
  } else {
    backbone = createBackbone(job.seed ?? 7);
  }
  const classifier = withClassifierHead(backbone, job.nClasses, job.seed ?? 7);
  const headUnits = classifier.outputs[0].shape[1];
  if (headUnits !== job.nClasses) {
    throw new Error(`class-count mismatch: head has ${headUnits}, expected ${job.nClasses}`);
  }
  return { classifier, backbone };
}

function spxmPath(job: ExportJob, imageId: number): string {
  return path.join(job.spxmDir, `img${String(imageId).padStart(4, "0")}_k${job.mainK}.spxm`);
}

/** Softmax rows come back float32; renormalize in doubles so the stored
 * rows sum to 1 within float32 round-off and read back untouched. */
function normalizedRows(probs: tf.Tensor2D): Float32Array[] {
  const [n, c] = probs.shape;
  const flat = probs.dataSync() as Float32Array;
  const rows: Float32Array[] = [];
  for (let r = 0; r < n; r++) {
    let sum = 0;
    for (let i = 0; i < c; i++) {
      const v = flat[r * c + i];
      if (!Number.isFinite(v)) throw new Error(`non-finite score for segment ${r}`);
      sum += v;
    }
    const row = new Float32Array(c);
    for (let i = 0; i < c; i++) {
      row[i] = flat[r * c + i] / sum;
    }
    rows.push(row);
  }
  return rows;
}

export function scoreImage(
  models: ExportModels,
  frame: RgbImage,
  spx: SuperpixelMap
): Float32Array[] {
  const assignment = resizeNearest(spx, FRAME_SIZE);
  const batch = new Float32Array(spx.nSegments * FRAME_SIZE * FRAME_SIZE * 3);
  for (let segment = 0; segment < spx.nSegments; segment++) {
    batch.set(maskedFrame(frame, assignment, segment), segment * FRAME_SIZE * FRAME_SIZE * 3);
  }
  return tf.tidy(() => {
    const input = tf.tensor4d(batch, [spx.nSegments, FRAME_SIZE, FRAME_SIZE, 3]);
    const probs = models.classifier.predict(input) as tf.Tensor2D;
    return normalizedRows(probs);
  });
}

export function globalFeature(models: ExportModels, frame: RgbImage): Float32Array {
  return tf.tidy(() => {
    const input = tf.tensor4d(frame.data, [1, FRAME_SIZE, FRAME_SIZE, 3]);
    const feat = models.backbone.predict(input) as tf.Tensor2D;
    const values = new Float32Array(feat.dataSync());
    for (const v of values) {
      if (!Number.isFinite(v)) throw new Error("non-finite feature output");
    }
    return values;
  });
}

export async function exportScores(job: ExportJob): Promise<string[]> {
  const manifest: Manifest = readManifest(job.manifestPath);
  if (manifest.classes.length !== job.nClasses) {
    throw new Error(
      `class-count mismatch: manifest has ${manifest.classes.length}, job expects ${job.nClasses}`
    );
  }
  const models = await buildModels(job);
  fs.mkdirSync(job.outDir, { recursive: true });
  const written: string[] = [];
  const split = job.split ?? "all";
  for (let imageId = 0; imageId < manifest.entries.length; imageId++) {
    const entry = manifest.entries[imageId];
    if (split !== "all" && entry.split !== split) continue;
    const spx = readSpxm(spxmPath(job, imageId));
    const frame = resizeBilinear(readPng(entry.image), FRAME_SIZE);
    const rows = scoreImage(models, frame, spx);
    const scorePath = path.join(job.outDir, `img${String(imageId).padStart(4, "0")}.spsc`);
    writeSpsc(scorePath, rows, job.nClasses);
    written.push(scorePath);
    if (job.features) {
      const featPath = path.join(job.outDir, `img${String(imageId).padStart(4, "0")}.gfea`);
      writeGfea(featPath, globalFeature(models, frame));
      written.push(featPath);
    }
  }
  return written;
}
