/**
 * Contract tests against real pipeline artifacts: the Python CLI generates
 * the dataset and superpixel maps, the exporter scores them, and the
 * pipeline's own reader must accept every produced file bit for bit.
 */

import { createHash } from "node:crypto";
import { spawnSync } from "node:child_process";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ExportJob, buildModels, exportScores, scoreImage } from "../src/export.js";
import { readSpsc, readSpxm } from "../src/formats.js";
import { FRAME_SIZE, readPng, resizeBilinear } from "../src/image.js";
import { createBackbone, loadModelFromDir, saveModelToDir, withClassifierHead } from "../src/model.js";

const N_CLASSES = 6;
const MAIN_K = 48;

let tmp: string;
let datasetDir: string;
let runDir: string;
let outDir: string;

function python(args: string[]): void {
  const res = spawnSync("python3", args, { encoding: "utf-8" });
  if (res.status !== 0) {
    throw new Error(`python3 ${args.join(" ")} failed: ${res.stderr}`);
  }
}

beforeAll(() => {
  tmp = fs.mkdtempSync(path.join(os.tmpdir(), "exporter-e2e-"));
  datasetDir = path.join(tmp, "ds");
  runDir = path.join(tmp, "run");
  outDir = path.join(tmp, "scores");
  python(["-m", "streetlabel.cli", "synth", "--out", datasetDir,
          "--n-train", "2", "--n-test", "1", "--size", "48", "--seed", "3"]);
  python(["-m", "streetlabel.cli", "segment", "--manifest",
          path.join(datasetDir, "manifest.json"), "--out", runDir,
          "--main-k", String(MAIN_K), "--workers", "1"]);
});

afterAll(() => {
  fs.rmSync(tmp, { recursive: true, force: true });
});

function job(overrides: Partial<ExportJob> = {}): ExportJob {
  return {
    manifestPath: path.join(datasetDir, "manifest.json"),
    spxmDir: path.join(runDir, "spxm"),
    outDir,
    nClasses: N_CLASSES,
    mainK: MAIN_K,
    features: true,
    ...overrides,
  };
}

describe("export job", () => {
  it("writes one SPSC per image with counts matching the SPXM headers", async () => {
    const written = await exportScores(job());
    const spscFiles = written.filter((p) => p.endsWith(".spsc"));
    expect(spscFiles.length).toBe(3);
    for (let i = 0; i < 3; i++) {
      const spx = readSpxm(path.join(runDir, "spxm", `img000${i}_k${MAIN_K}.spxm`));
      const { rows, nClasses } = readSpsc(path.join(outDir, `img000${i}.spsc`));
      expect(nClasses).toBe(N_CLASSES);
      expect(rows.length).toBe(spx.nSegments);
      for (const row of rows) {
        let sum = 0;
        for (const v of row) sum += v;
        expect(Math.abs(sum - 1)).toBeLessThanOrEqual(1e-4);
      }
    }
  });

  it("round-trips through the pipeline's score reader bit-exactly", async () => {
    await exportScores(job());
    for (let i = 0; i < 3; i++) {
      const file = path.join(outDir, `img000${i}.spsc`);
      const payload = fs.readFileSync(file).subarray(16);
      const ours = createHash("sha256").update(payload).digest("hex");
      const res = spawnSync(
        "python3",
        ["-c",
         "import sys, hashlib; from streetlabel.scorer import load_scores; " +
         "print(hashlib.sha256(load_scores(sys.argv[1]).tobytes()).hexdigest())",
         file],
        { encoding: "utf-8" }
      );
      expect(res.status).toBe(0);
      expect(res.stdout.trim()).toBe(ours);
    }
  });

  it("emits GFEA features the pipeline can read", async () => {
    await exportScores(job());
    const res = spawnSync(
      "python3",
      ["-c",
       "import sys, numpy as np; from streetlabel.retrieval import load_feature; " +
       "f = load_feature(sys.argv[1]); print(len(f), bool(np.isfinite(f).all()))",
       path.join(outDir, "img0000.gfea")],
      { encoding: "utf-8" }
    );
    expect(res.status).toBe(0);
    expect(res.stdout.trim()).toBe("64 True");
  });

  it("is deterministic for identical inputs", async () => {
    const models = await buildModels(job());
    const spx = readSpxm(path.join(runDir, "spxm", `img0000_k${MAIN_K}.spxm`));
    const manifest = JSON.parse(
      fs.readFileSync(path.join(datasetDir, "manifest.json"), "utf-8")
    );
    const frame = resizeBilinear(
      readPng(path.join(datasetDir, manifest.entries[0].image)),
      FRAME_SIZE
    );
    const a = scoreImage(models, frame, spx);
    const b = scoreImage(models, frame, spx);
    for (let r = 0; r < a.length; r++) {
      expect(Array.from(a[r])).toEqual(Array.from(b[r]));
    }
  });

  it("rejects a class-count mismatch", async () => {
    await expect(exportScores(job({ nClasses: 4 }))).rejects.toThrow(/class-count mismatch/);
  });

  it("reports missing superpixel maps", async () => {
    await expect(
      exportScores(job({ spxmDir: path.join(tmp, "empty") }))
    ).rejects.toThrow(/missing superpixel map/);
  });

  it("supports the split filter", async () => {
    const dir = path.join(tmp, "test_only");
    const written = await exportScores(job({ outDir: dir, split: "test", features: false }));
    expect(written.length).toBe(1);
    expect(written[0].endsWith("img0002.spsc")).toBe(true);
  });
});

describe("model head replacement", () => {
  it("attaches a softmax head of the requested width", () => {
    const backbone = createBackbone(7);
    const model = withClassifierHead(backbone, 11, 7);
    expect(model.outputs[0].shape[1]).toBe(11);
  });

  it("saved and reloaded backbones score identically", async () => {
    const dir = path.join(tmp, "model");
    const backbone = createBackbone(7);
    await saveModelToDir(backbone, dir);
    const reloaded = await loadModelFromDir(dir);
    const models = { classifier: withClassifierHead(backbone, N_CLASSES, 7), backbone };
    const reloadedModels = {
      classifier: withClassifierHead(reloaded, N_CLASSES, 7),
      backbone: reloaded,
    };
    const spx = readSpxm(path.join(runDir, "spxm", `img0001_k${MAIN_K}.spxm`));
    const manifest = JSON.parse(
      fs.readFileSync(path.join(datasetDir, "manifest.json"), "utf-8")
    );
    const frame = resizeBilinear(
      readPng(path.join(datasetDir, manifest.entries[1].image)),
      FRAME_SIZE
    );
    const a = scoreImage(models, frame, spx);
    const b = scoreImage(reloadedModels, frame, spx);
    for (let r = 0; r < a.length; r++) {
      expect(Array.from(a[r])).toEqual(Array.from(b[r]));
    }
  });
});
