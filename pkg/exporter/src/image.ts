/**
 * PNG decoding and the masked-frame convention: the source image is resized
 * to 256x256 (bilinear), the superpixel assignment with it (nearest), and
 * one segment is kept at its original location on a black canvas.
 */

import * as fs from "node:fs";
import { PNG } from "pngjs";

import { SuperpixelMap } from "./formats.js";

export const FRAME_SIZE = 256;

export interface RgbImage {
  width: number;
  height: number;
  /** row-major RGB triples, 0..255 */
  data: Float32Array;
}

export function readPng(filePath: string): RgbImage {
  const png = PNG.sync.read(fs.readFileSync(filePath));
  const data = new Float32Array(png.width * png.height * 3);
  for (let i = 0; i < png.width * png.height; i++) {
    data[3 * i] = png.data[4 * i];
    data[3 * i + 1] = png.data[4 * i + 1];
    data[3 * i + 2] = png.data[4 * i + 2];
  }
  return { width: png.width, height: png.height, data };
}

export function resizeBilinear(image: RgbImage, size: number): RgbImage {
  if (image.width === size && image.height === size) return image;
  const out = new Float32Array(size * size * 3);
  const sx = image.width / size;
  const sy = image.height / size;
  for (let y = 0; y < size; y++) {
    const fy = Math.min((y + 0.5) * sy - 0.5, image.height - 1);
    const y0 = Math.max(Math.floor(fy), 0);
    const y1 = Math.min(y0 + 1, image.height - 1);
    const wy = Math.max(fy - y0, 0);
    for (let x = 0; x < size; x++) {
      const fx = Math.min((x + 0.5) * sx - 0.5, image.width - 1);
      const x0 = Math.max(Math.floor(fx), 0);
      const x1 = Math.min(x0 + 1, image.width - 1);
      const wx = Math.max(fx - x0, 0);
      for (let c = 0; c < 3; c++) {
        const p00 = image.data[3 * (y0 * image.width + x0) + c];
        const p01 = image.data[3 * (y0 * image.width + x1) + c];
        const p10 = image.data[3 * (y1 * image.width + x0) + c];
        const p11 = image.data[3 * (y1 * image.width + x1) + c];
        const top = p00 + (p01 - p00) * wx;
        const bottom = p10 + (p11 - p10) * wx;
        out[3 * (y * size + x) + c] = top + (bottom - top) * wy;
      }
    }
  }
  return { width: size, height: size, data: out };
}

export function resizeNearest(spx: SuperpixelMap, size: number): Uint32Array {
  if (spx.width === size && spx.height === size) return spx.assignment;
  const out = new Uint32Array(size * size);
  for (let y = 0; y < size; y++) {
    const sy = Math.min(Math.floor((y * spx.height) / size), spx.height - 1);
    for (let x = 0; x < size; x++) {
      const sx = Math.min(Math.floor((x * spx.width) / size), spx.width - 1);
      out[y * size + x] = spx.assignment[sy * spx.width + sx];
    }
  }
  return out;
}

/** Segment pixels at their original position, pure black elsewhere. */
export function maskedFrame(
  frame: RgbImage,
  assignment: Uint32Array,
  segmentId: number
): Float32Array {
  const out = new Float32Array(frame.width * frame.height * 3);
  for (let i = 0; i < assignment.length; i++) {
    if (assignment[i] === segmentId) {
      out[3 * i] = frame.data[3 * i];
      out[3 * i + 1] = frame.data[3 * i + 1];
      out[3 * i + 2] = frame.data[3 * i + 2];
    }
  }
  return out;
}
