/**
 * Bridge to the topoguard topology toolkit for training loops running on
 * this runtime: key-voxel masks, the topology-constrained loss with
 * gradients, and the segmentation metric suite.
 *
 * Host arrays are serialized to the TGVOL1 container, handed to the
 * toolkit's CLI, and results are decoded back into typed arrays. Input
 * arrays are never mutated.
 */

import { readBlob, readText, runCli, withWorkdir, writeBlob, writeText } from "./runner.js";
import {
  Dims,
  SpacingMm,
  checkDims,
  decode,
  encodeFloatVolume,
  encodeLabels,
  voxelCount,
} from "./tgvol.js";

export { Dims, SpacingMm } from "./tgvol.js";
export * as tgvol from "./tgvol.js";
export { splitmix64, randomLabels } from "./splitmix.js";

export interface VolumeGeometry {
  dims: Dims;
  /** Voxel spacing (dz, dy, dx) in millimetres; defaults to 1 mm isotropic. */
  spacing?: SpacingMm;
}

export interface LossBreakdown {
  l_ce: number;
  l_dice: number;
  l_tp: number;
  lambda: number;
  l_total: number;
  key_voxel_count: number;
}

export interface TotalLossOptions {
  /** Constraint spec text; the toolkit's whole-heart defaults when omitted. */
  specText?: string;
  /** Topology penalty weight; toolkit default is 1e-6. */
  lambda?: number;
  tpNorm?: "keyvox" | "allvox";
  /** Also return the gradient with respect to the likelihood map. */
  withGradient?: boolean;
  /** Gradient space: likelihoods (default) or pre-normalization scores. */
  gradSpace?: "prob" | "score";
}

export interface MetricRow {
  class: string;
  dice: number | null;
  jaccard: number | null;
  sd_mm: number | null;
  hd_mm: number | null;
}

function geometryOf(g: VolumeGeometry): { dims: Dims; spacing: SpacingMm } {
  checkDims(g.dims);
  return { dims: g.dims, spacing: g.spacing ?? [1, 1, 1] };
}

function specArgs(dir: string, specText: string | undefined): string[] {
  if (specText === undefined) return [];
  return ["--constraints", writeText(dir, "constraints.txt", specText)];
}

/**
 * Binary mask of voxels violating the constraint set, one byte per voxel
 * in row-major (depth, height, width) order.
 */
export function keyVoxels(
  labels: Uint8Array,
  geometry: VolumeGeometry,
  specText?: string,
): Uint8Array {
  const { dims, spacing } = geometryOf(geometry);
  return withWorkdir((dir) => {
    const seg = writeBlob(dir, "seg.tgvol", encodeLabels(labels, dims, spacing));
    runCli(["keymask", seg, "-o", "mask.tgvol", ...specArgs(dir, specText)], dir);
    const mask = decode(readBlob(`${dir}/mask.tgvol`));
    return mask.data as Uint8Array;
  });
}

/**
 * Combined loss (cross-entropy + soft Dice + weighted topology penalty)
 * of a channel-major likelihood map against discrete ground truth.
 */
export function totalLoss(
  probs: Float32Array,
  channels: number,
  labels: Uint8Array,
  geometry: VolumeGeometry,
  options: TotalLossOptions = {},
): { breakdown: LossBreakdown; gradient?: Float32Array } {
  const { dims, spacing } = geometryOf(geometry);
  if (labels.length !== voxelCount(dims)) {
    throw new Error(`label payload holds ${labels.length} voxels, dims need ${voxelCount(dims)}`);
  }
  return withWorkdir((dir) => {
    const probsPath = writeBlob(
      dir,
      "probs.tgvol",
      encodeFloatVolume(probs, channels, dims, spacing),
    );
    const gtPath = writeBlob(dir, "gt.tgvol", encodeLabels(labels, dims, spacing));
    const args = ["loss", probsPath, gtPath, ...specArgs(dir, options.specText)];
    if (options.lambda !== undefined) args.push("--lambda", String(options.lambda));
    if (options.tpNorm) args.push("--tp-norm", options.tpNorm);
    if (options.withGradient) {
      args.push("--grad-out", "grad.tgvol", "--grad-space", options.gradSpace ?? "prob");
    }
    const { stdout } = runCli(args, dir);
    const breakdown = JSON.parse(stdout.trim()) as LossBreakdown;
    if (!options.withGradient) return { breakdown };
    const gradient = decode(readBlob(`${dir}/grad.tgvol`)).data as Float32Array;
    return { breakdown, gradient };
  });
}

function parseCell(cell: string): number | null {
  return cell === "NA" ? null : Number(cell);
}

/**
 * Per-class and pooled Dice/Jaccard/surface-distance rows for a predicted
 * segmentation against ground truth. Distances are in millimetres.
 */
export function metricsReport(
  pred: Uint8Array,
  gt: Uint8Array,
  geometry: VolumeGeometry,
): MetricRow[] {
  const { dims, spacing } = geometryOf(geometry);
  return withWorkdir((dir) => {
    const predPath = writeBlob(dir, "pred.tgvol", encodeLabels(pred, dims, spacing));
    const gtPath = writeBlob(dir, "gt.tgvol", encodeLabels(gt, dims, spacing));
    runCli(["metrics", predPath, gtPath, "--csv", "report.csv"], dir);
    const lines = readText(`${dir}/report.csv`).trim().split("\n");
    const header = lines.shift();
    if (header !== "class,dice,jaccard,sd_mm,hd_mm") {
      throw new Error(`unexpected metrics header: ${header}`);
    }
    return lines.map((line) => {
      const [name, dice, jaccard, sd, hd] = line.split(",");
      return {
        class: name,
        dice: parseCell(dice),
        jaccard: parseCell(jaccard),
        sd_mm: parseCell(sd),
        hd_mm: parseCell(hd),
      };
    });
  });
}
