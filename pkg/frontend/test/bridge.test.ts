/**
 * Bridge equivalence suite: every result produced through the typed-array
 * bridge must match what the toolkit's own CLI yields on identical bytes —
 * masks bitwise, scalars to 1e-12 relative — across 25 seeded cases.
 */

import { mkdtempSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, describe, expect, it } from "vitest";

import { keyVoxels, metricsReport, randomLabels, splitmix64, totalLoss } from "../src/index.js";
import { readBlob, runCli } from "../src/runner.js";
import { decode, encodeLabels, encodeFloatVolume } from "../src/tgvol.js";
import type { Dims } from "../src/tgvol.js";

const CASES = Array.from({ length: 25 }, (_, i) => ({
  seed: 1000 + i,
  dims: [4 + (i % 3), 4 + ((i + 1) % 3), 4 + ((i + 2) % 3)] as Dims,
}));

const SPEC_TEXT = [
  "connectivity 26",
  "background_in_y true",
  "contain LV Myo",
  "exclude RA AO",
  "exclude LA PA",
].join("\n");

const scratch = mkdtempSync(join(tmpdir(), "bridge-cases-"));
const specFile = join(scratch, "constraints.txt");
writeFileSync(specFile, SPEC_TEXT, "utf8");
afterAll(() => rmSync(scratch, { recursive: true, force: true }));

function synthRandom(seed: number, dims: Dims, name: string): string {
  const out = join(scratch, name);
  runCli(
    [
      "synth", "random", "-o", out,
      "--seed", String(seed),
      "--dims", String(dims[0]), String(dims[1]), String(dims[2]),
      "--classes", "8",
    ],
    scratch,
  );
  return out;
}

function synthSoftened(seed: number, dims: Dims, name: string): string {
  const out = join(scratch, name);
  runCli(
    [
      "synth", "random", "-o", out,
      "--seed", String(seed),
      "--dims", String(dims[0]), String(dims[1]), String(dims[2]),
      "--classes", "8", "--soften", "0.4", "--channels", "8",
    ],
    scratch,
  );
  return out;
}

function relClose(a: number, b: number, rel = 1e-12): boolean {
  return Math.abs(a - b) <= rel * Math.max(Math.abs(a), Math.abs(b), 1e-300);
}

describe("seeded generator parity", () => {
  it("splitmix64 matches the toolkit's frozen first value for seed 0", () => {
    expect(splitmix64(0n, 1)[0]).toBe(16294208416658607535n);
  });

  it("randomLabels reproduces `synth random` byte-for-byte", () => {
    for (const { seed, dims } of CASES.slice(0, 5)) {
      const file = synthRandom(seed, dims, `gen-${seed}.tgvol`);
      const fromCli = decode(readBlob(file));
      const local = randomLabels(BigInt(seed), dims[0] * dims[1] * dims[2], 8);
      expect(fromCli.dims).toEqual(dims);
      expect(Buffer.from(fromCli.data as Uint8Array).equals(Buffer.from(local))).toBe(true);
    }
  });
});

describe("bridge equivalence across 25 seeded cases", () => {
  it.each(CASES)("case seed=$seed dims=$dims", ({ seed, dims }) => {
    const labelsFile = synthRandom(seed, dims, `labels-${seed}.tgvol`);
    const gtFile = synthRandom(seed + 500, dims, `gt-${seed}.tgvol`);
    const probsFile = synthSoftened(seed, dims, `probs-${seed}.tgvol`);

    const labels = decode(readBlob(labelsFile)).data as Uint8Array;
    const gt = decode(readBlob(gtFile)).data as Uint8Array;
    const probsVol = decode(readBlob(probsFile));
    const probs = probsVol.data as Float32Array;

    // key voxels: bridge mask must equal the CLI's keymask output bitwise
    const maskFile = join(scratch, `mask-${seed}.tgvol`);
    runCli(["keymask", labelsFile, "-o", maskFile, "--constraints", specFile], scratch);
    const refMask = decode(readBlob(maskFile)).data as Uint8Array;
    const mask = keyVoxels(labels, { dims }, SPEC_TEXT);
    expect(mask.length).toBe(refMask.length);
    expect(Buffer.from(mask).equals(Buffer.from(refMask))).toBe(true);

    // total loss: scalars to 1e-12 relative, gradient bitwise
    const gradFile = join(scratch, `grad-${seed}.tgvol`);
    const ref = runCli(
      ["loss", probsFile, gtFile, "--constraints", specFile, "--grad-out", gradFile],
      scratch,
    );
    const refLoss = JSON.parse(ref.stdout.trim());
    const { breakdown, gradient } = totalLoss(probs, probsVol.channels, gt, { dims }, {
      specText: SPEC_TEXT,
      withGradient: true,
    });
    for (const k of ["l_ce", "l_dice", "l_tp", "lambda", "l_total"] as const) {
      expect(relClose(breakdown[k], refLoss[k])).toBe(true);
    }
    expect(breakdown.key_voxel_count).toBe(refLoss.key_voxel_count);
    const refGrad = decode(readBlob(gradFile)).data as Float32Array;
    expect(gradient!.length).toBe(probs.length); // gradient shape == probs shape
    expect(Buffer.from(gradient!.buffer).equals(Buffer.from(refGrad.buffer))).toBe(true);

    // metrics: rows must match the CLI's CSV exactly
    const csvFile = join(scratch, `metrics-${seed}.csv`);
    runCli(["metrics", labelsFile, gtFile, "--csv", csvFile], scratch);
    const want = readBlob(csvFile);
    const rows = metricsReport(labels, gt, { dims });
    const wantRows = Buffer.from(want).toString("utf8").trim().split("\n").slice(1);
    expect(rows.length).toBe(wantRows.length);
    rows.forEach((row, i) => {
      const [name, dice, jaccard, sd, hd] = wantRows[i].split(",");
      expect(row.class).toBe(name);
      for (const [got, cell] of [
        [row.dice, dice], [row.jaccard, jaccard], [row.sd_mm, sd], [row.hd_mm, hd],
      ] as const) {
        if (cell === "NA") expect(got).toBeNull();
        else expect(relClose(got!, Number(cell))).toBe(true);
      }
    });
  }, 60_000);
});

describe("bridge surface behavior", () => {
  it("default lambda is 1e-6", () => {
    const dims: Dims = [4, 4, 4];
    const labels = randomLabels(7n, 64, 8);
    const probs = new Float32Array(8 * 64).fill(0.125);
    const { breakdown } = totalLoss(probs, 8, labels, { dims });
    expect(breakdown.lambda).toBe(1e-6);
  });

  it("an empty constraint text yields an all-false mask", () => {
    const dims: Dims = [4, 4, 4];
    const labels = randomLabels(8n, 64, 8);
    const mask = keyVoxels(labels, { dims }, "");
    expect(mask.every((v) => v === 0)).toBe(true);
  });

  it("non-3D dims throw before any subprocess runs", () => {
    const labels = new Uint8Array(8);
    expect(() => keyVoxels(labels, { dims: [2, 4] as unknown as Dims })).toThrow(/dims/);
    expect(() => keyVoxels(labels, { dims: [2, 2, 0] as unknown as Dims })).toThrow(/dims/);
  });

  it("payload length must match dims", () => {
    expect(() => keyVoxels(new Uint8Array(7), { dims: [2, 2, 2] })).toThrow(/voxels/);
    expect(() => totalLoss(new Float32Array(9), 2, new Uint8Array(8), { dims: [2, 2, 2] }))
      .toThrow(/expected/);
  });

  it("input arrays are never mutated", () => {
    const dims: Dims = [3, 3, 3];
    const labels = randomLabels(9n, 27, 8);
    const copy = labels.slice();
    keyVoxels(labels, { dims });
    expect(Buffer.from(labels).equals(Buffer.from(copy))).toBe(true);
  });

  it("bad constraint text surfaces the toolkit's error", () => {
    const dims: Dims = [2, 2, 2];
    const labels = new Uint8Array(8);
    expect(() => keyVoxels(labels, { dims }, "frobnicate LV Myo")).toThrow(/unknown directive/);
  });
});
