/**
 * Scoring network: a compact convolutional backbone with a replaceable
 * softmax head sized to the target label set. The default backbone is
 * deterministic (seeded initializers); a finetuned tfjs-layers model saved
 * with saveModelToDir can be dropped in via --model instead.
 */

import * as fs from "node:fs";
import * as path from "node:path";
import * as tf from "@tensorflow/tfjs";

import { FRAME_SIZE } from "./image.js";

export const FEATURE_DIM = 64;

export function createBackbone(seed = 7): tf.LayersModel {
  const input = tf.input({ shape: [FRAME_SIZE, FRAME_SIZE, 3] });
  let x = tf.layers
    .rescaling({ scale: 1 / 255 })
    .apply(input) as tf.SymbolicTensor;
  x = tf.layers
    .conv2d({
      filters: 8,
      kernelSize: 5,
      strides: 4,
      activation: "relu",
      kernelInitializer: tf.initializers.glorotUniform({ seed }),
      biasInitializer: "zeros",
    })
    .apply(x) as tf.SymbolicTensor;
  x = tf.layers.maxPooling2d({ poolSize: 2 }).apply(x) as tf.SymbolicTensor;
  x = tf.layers
    .conv2d({
      filters: 16,
      kernelSize: 3,
      strides: 2,
      activation: "relu",
      kernelInitializer: tf.initializers.glorotUniform({ seed: seed + 1 }),
      biasInitializer: "zeros",
    })
    .apply(x) as tf.SymbolicTensor;
  x = tf.layers.globalAveragePooling2d({}).apply(x) as tf.SymbolicTensor;
  x = tf.layers
    .dense({
      units: FEATURE_DIM,
      activation: "relu",
      kernelInitializer: tf.initializers.glorotUniform({ seed: seed + 2 }),
      biasInitializer: "zeros",
    })
    .apply(x) as tf.SymbolicTensor;
  return tf.model({ inputs: input, outputs: x });
}

/** Replace the final layer: attach an nClasses softmax head to a backbone. */
export function withClassifierHead(
  backbone: tf.LayersModel,
  nClasses: number,
  seed = 7
): tf.LayersModel {
  const head = tf.layers
    .dense({
      units: nClasses,
      activation: "softmax",
      kernelInitializer: tf.initializers.glorotUniform({ seed: seed + 3 }),
      biasInitializer: "zeros",
    })
    .apply(backbone.outputs[0]) as tf.SymbolicTensor;
  return tf.model({ inputs: backbone.inputs, outputs: head });
}

const WEIGHTS_FILE = "weights.bin";
const MODEL_FILE = "model.json";

export async function saveModelToDir(model: tf.LayersModel, dir: string): Promise<void> {
  fs.mkdirSync(dir, { recursive: true });
  await model.save({
    save: async (artifacts) => {
      const weightData = artifacts.weightData as ArrayBuffer;
      fs.writeFileSync(path.join(dir, WEIGHTS_FILE), Buffer.from(weightData));
      fs.writeFileSync(
        path.join(dir, MODEL_FILE),
        JSON.stringify({
          modelTopology: artifacts.modelTopology,
          weightsManifest: [
            { paths: [WEIGHTS_FILE], weights: artifacts.weightSpecs },
          ],
        })
      );
      return { modelArtifactsInfo: { dateSaved: new Date(), modelTopologyType: "JSON" } };
    },
  });
}

export async function loadModelFromDir(dir: string): Promise<tf.LayersModel> {
  const spec = JSON.parse(fs.readFileSync(path.join(dir, MODEL_FILE), "utf-8"));
  const weightData = fs.readFileSync(path.join(dir, WEIGHTS_FILE));
  return tf.loadLayersModel({
    load: async () => ({
      modelTopology: spec.modelTopology,
      weightSpecs: spec.weightsManifest[0].weights,
      weightData: weightData.buffer.slice(
        weightData.byteOffset,
        weightData.byteOffset + weightData.byteLength
      ),
    }),
  });
}
