/**
 * Binary interchange formats shared with the labeling pipeline:
 *  SPXM  superpixel maps   "SPXM" u32 width, height, nSegments, u32 ids
 *  SPSC  label scores      "SPSC" u32 version=1, nSuperpixels, nClasses, f32 rows
 *  GFEA  global features   "GFEA" u32 dim, f32 values
 * All integers and floats are little-endian.
 */

import * as fs from "node:fs";
import * as path from "node:path";

export interface SuperpixelMap {
  width: number;
  height: number;
  nSegments: number;
  /** row-major segment id per pixel */
  assignment: Uint32Array;
}

export function readSpxm(filePath: string): SuperpixelMap {
  if (!fs.existsSync(filePath)) {
    throw new Error(`missing superpixel map: ${filePath}`);
  }
  const buf = fs.readFileSync(filePath);
  if (buf.subarray(0, 4).toString("ascii") !== "SPXM") {
    throw new Error(`bad magic in ${filePath}`);
  }
  const width = buf.readUInt32LE(4);
  const height = buf.readUInt32LE(8);
  const nSegments = buf.readUInt32LE(12);
  const expected = 16 + 4 * width * height;
  if (buf.length !== expected) {
    throw new Error(`truncated superpixel map ${filePath}`);
  }
  const assignment = new Uint32Array(width * height);
  for (let i = 0; i < assignment.length; i++) {
    assignment[i] = buf.readUInt32LE(16 + 4 * i);
  }
  return { width, height, nSegments, assignment };
}

/** Write via a temp file and rename, so partial output is never visible. */
function atomicWrite(filePath: string, data: Buffer): void {
  const tmp = path.join(
    path.dirname(filePath),
    `.${path.basename(filePath)}.tmp`
  );
  fs.writeFileSync(tmp, data);
  fs.renameSync(tmp, filePath);
}

export function writeSpsc(filePath: string, rows: Float32Array[], nClasses: number): void {
  for (const [i, row] of rows.entries()) {
    if (row.length !== nClasses) {
      throw new Error(`score row ${i} has ${row.length} entries, expected ${nClasses}`);
    }
    let sum = 0;
    for (const v of row) {
      if (!Number.isFinite(v)) throw new Error(`non-finite score in row ${i}`);
      sum += v;
    }
    if (Math.abs(sum - 1) > 1e-4) {
      throw new Error(`score row ${i} sums to ${sum}`);
    }
  }
  const buf = Buffer.alloc(16 + 4 * rows.length * nClasses);
  buf.write("SPSC", 0, "ascii");
  buf.writeUInt32LE(1, 4);
  buf.writeUInt32LE(rows.length, 8);
  buf.writeUInt32LE(nClasses, 12);
  let offset = 16;
  for (const row of rows) {
    for (const v of row) {
      buf.writeFloatLE(v, offset);
      offset += 4;
    }
  }
  atomicWrite(filePath, buf);
}

export function readSpsc(filePath: string): { rows: Float32Array[]; nClasses: number } {
  const buf = fs.readFileSync(filePath);
  if (buf.subarray(0, 4).toString("ascii") !== "SPSC") {
    throw new Error(`bad magic in ${filePath}`);
  }
  const version = buf.readUInt32LE(4);
  if (version !== 1) throw new Error(`unsupported SPSC version ${version}`);
  const nRows = buf.readUInt32LE(8);
  const nClasses = buf.readUInt32LE(12);
  const rows: Float32Array[] = [];
  let offset = 16;
  for (let r = 0; r < nRows; r++) {
    const row = new Float32Array(nClasses);
    for (let c = 0; c < nClasses; c++) {
      row[c] = buf.readFloatLE(offset);
      offset += 4;
    }
    rows.push(row);
  }
  return { rows, nClasses };
}

export function writeGfea(filePath: string, values: Float32Array): void {
  for (const v of values) {
    if (!Number.isFinite(v)) throw new Error("non-finite feature value");
  }
  const buf = Buffer.alloc(8 + 4 * values.length);
  buf.write("GFEA", 0, "ascii");
  buf.writeUInt32LE(values.length, 4);
  for (let i = 0; i < values.length; i++) {
    buf.writeFloatLE(values[i], 8 + 4 * i);
  }
  atomicWrite(filePath, buf);
}

export interface ManifestEntry {
  image: string;
  labels: string;
  split: "train" | "test";
}

export interface Manifest {
  classes: string[];
  entries: ManifestEntry[];
  baseDir: string;
}

export function readManifest(filePath: string): Manifest {
  const raw = JSON.parse(fs.readFileSync(filePath, "utf-8"));
  const baseDir = path.dirname(path.resolve(filePath));
  const entries = (raw.entries as any[]).map((rec) => ({
    image: path.resolve(baseDir, rec.image),
    labels: path.resolve(baseDir, rec.labels),
    split: rec.split,
  }));
  return { classes: raw.classes, entries, baseDir };
}
