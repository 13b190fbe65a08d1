/**
 * Re-read an emitted canonical dataset directory and check it against a
 * manifest (or against expected counts).  Failures are report content, not
 * exceptions, so callers can list every mismatch.
 */

import * as fs from "node:fs";
import * as path from "node:path";
import { Manifest } from "./convert.js";

export interface VerifyReport {
  ok: boolean;
  failures: string[];
  counts: { n: number; d: number; c: number; edges: number };
}

/** Counts taken from the upstream distributions. */
export const EXPECTED: Record<string, { n: number; d: number; c: number }> = {
  cora: { n: 2708, d: 1433, c: 7 },
  citeseer: { n: 3327, d: 3703, c: 6 },
  pubmed: { n: 19717, d: 500, c: 3 },
};

export function verify(outDir: string, manifest: Manifest): VerifyReport {
  const failures: string[] = [];
  const counts = { n: 0, d: 0, c: 0, edges: 0 };

  const read = (file: string): string | null => {
    const p = path.join(outDir, file);
    if (!fs.existsSync(p)) {
      failures.push(`${file}: missing`);
      return null;
    }
    return fs.readFileSync(p, "utf-8");
  };

  const metaText = read("meta.json");
  if (metaText !== null) {
    const meta = JSON.parse(metaText) as { n: number; d: number; c: number };
    counts.n = meta.n;
    counts.d = meta.d;
    counts.c = meta.c;
    if (meta.n !== manifest.n) failures.push(`meta.json: n=${meta.n}, manifest says ${manifest.n}`);
    if (meta.d !== manifest.d) failures.push(`meta.json: d=${meta.d}, manifest says ${manifest.d}`);
    if (meta.c !== manifest.c) failures.push(`meta.json: c=${meta.c}, manifest says ${manifest.c}`);
  }

  const featuresText = read("features.csv");
  if (featuresText !== null) {
    const rows = featuresText.split("\n").filter((line) => line !== "");
    if (rows.length !== manifest.n)
      failures.push(`features.csv: ${rows.length} rows, expected ${manifest.n}`);
    const width = rows.length ? rows[0].split(",").length : 0;
    if (width !== manifest.d)
      failures.push(`features.csv: ${width} columns, expected ${manifest.d}`);
  }

  const labelsText = read("labels.csv");
  if (labelsText !== null) {
    const rows = labelsText.split("\n").filter((line) => line !== "");
    if (rows.length !== manifest.n)
      failures.push(`labels.csv: ${rows.length} rows, expected ${manifest.n}`);
    for (const [i, row] of rows.entries()) {
      const v = Number(row);
      if (!Number.isInteger(v) || v < 0 || v >= manifest.c) {
        failures.push(`labels.csv:${i + 1}: label ${row} outside [0, ${manifest.c})`);
        break;
      }
    }
  }

  const edgesText = read("edges.csv");
  if (edgesText !== null) {
    const rows = edgesText.split("\n").filter((line) => line !== "");
    counts.edges = rows.length;
    if (rows.length !== manifest.edges)
      failures.push(`edges.csv: ${rows.length} rows, expected ${manifest.edges}`);
    const seen = new Set<string>();
    for (const [i, row] of rows.entries()) {
      const [u, v] = row.split(",").map(Number);
      if (!(Number.isInteger(u) && Number.isInteger(v)) || u >= v || u < 0 || v >= manifest.n) {
        failures.push(`edges.csv:${i + 1}: bad pair '${row}'`);
        break;
      }
      if (seen.has(row)) {
        failures.push(`edges.csv:${i + 1}: duplicate '${row}'`);
        break;
      }
      seen.add(row);
    }
  }

  return { ok: failures.length === 0, failures, counts };
}

export function verifyExpectedCounts(name: string, manifest: Manifest): string[] {
  const expected = EXPECTED[name];
  if (!expected) return [];
  const failures: string[] = [];
  if (manifest.n !== expected.n)
    failures.push(`${name}: n=${manifest.n}, expected ${expected.n}`);
  if (manifest.d !== expected.d)
    failures.push(`${name}: d=${manifest.d}, expected ${expected.d}`);
  if (manifest.c !== expected.c)
    failures.push(`${name}: c=${manifest.c}, expected ${expected.c}`);
  return failures;
}
