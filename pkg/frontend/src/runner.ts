/**
 * Subprocess plumbing: every bridge call round-trips through the toolkit's
 * CLI inside a throwaway working directory.
 */

import { execFileSync } from "node:child_process";
import { mkdtempSync, readFileSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

/** Interpreter that has the toolkit installed; override via TOPOGUARD_PYTHON. */
export function pythonInterpreter(): string {
  return process.env.TOPOGUARD_PYTHON ?? "python3";
}

export interface CliResult {
  stdout: string;
  status: number;
}

export function runCli(args: string[], cwd: string): CliResult {
  try {
    const stdout = execFileSync(pythonInterpreter(), ["-m", "topoguard", ...args], {
      cwd,
      encoding: "utf8",
      maxBuffer: 1 << 28,
    });
    return { stdout, status: 0 };
  } catch (err) {
    const e = err as { status?: number; stdout?: string; stderr?: string };
    if (typeof e.status === "number" && e.status === 1) {
      // exit 1 flags topology violations, not a failure
      return { stdout: e.stdout ?? "", status: 1 };
    }
    const detail = (e.stderr ?? "").trim() || String(err);
    throw new Error(`topoguard ${args[0]} failed: ${detail}`);
  }
}

export function withWorkdir<T>(fn: (dir: string) => T): T {
  const dir = mkdtempSync(join(tmpdir(), "topoguard-bridge-"));
  try {
    return fn(dir);
  } finally {
    rmSync(dir, { recursive: true, force: true });
  }
}

export function writeBlob(dir: string, name: string, blob: Uint8Array): string {
  const path = join(dir, name);
  writeFileSync(path, blob);
  return path;
}

export function writeText(dir: string, name: string, text: string): string {
  const path = join(dir, name);
  writeFileSync(path, text, "utf8");
  return path;
}

export function readBlob(path: string): Uint8Array {
  return new Uint8Array(readFileSync(path));
}

export function readText(path: string): string {
  return readFileSync(path, "utf8");
}
