/**
 * Emit an assembled graph in the canonical dataset layout:
 * meta.json, features.csv, labels.csv, edges.csv (UTF-8, LF, 0-based ids),
 * plus a manifest recording counts and content checksums.
 */

import { createHash } from "node:crypto";
import * as fs from "node:fs";
import * as path from "node:path";
import { AssembledGraph } from "./planetoid.js";

export interface Manifest {
  name: string;
  n: number;
  d: number;
  c: number;
  edges: number;
  featureless: number;
  checksums: Record<string, string>;
}

function formatValue(v: number): string {
  if (Number.isInteger(v)) return String(v);
  return String(v);
}

function sha256(text: string): string {
  return createHash("sha256").update(text, "utf-8").digest("hex");
}

export function convert(graph: AssembledGraph, outDir: string): Manifest {
  fs.mkdirSync(outDir, { recursive: true });

  const meta =
    JSON.stringify({ n: graph.n, d: graph.d, c: graph.nClasses, name: graph.name }) + "\n";

  const featureLines: string[] = new Array(graph.n);
  for (let i = 0; i < graph.n; i++) {
    const row = new Array<string>(graph.d);
    for (let j = 0; j < graph.d; j++) row[j] = formatValue(graph.features[i * graph.d + j]);
    featureLines[i] = row.join(",");
  }
  const featuresCsv = featureLines.join("\n") + "\n";

  const labelsCsv = Array.from(graph.labels, (v) => String(v)).join("\n") + "\n";
  const edgesCsv = graph.edges.map(([u, v]) => `${u},${v}`).join("\n") + "\n";

  const files: Record<string, string> = {
    "meta.json": meta,
    "features.csv": featuresCsv,
    "labels.csv": labelsCsv,
    "edges.csv": edgesCsv,
  };
  const checksums: Record<string, string> = {};
  for (const [file, text] of Object.entries(files)) {
    fs.writeFileSync(path.join(outDir, file), text, { encoding: "utf-8" });
    checksums[file] = sha256(text);
  }

  const manifest: Manifest = {
    name: graph.name,
    n: graph.n,
    d: graph.d,
    c: graph.nClasses,
    edges: graph.edges.length,
    featureless: graph.isolated.length,
    checksums,
  };
  fs.writeFileSync(
    path.join(outDir, "manifest.json"),
    JSON.stringify(manifest, null, 2) + "\n",
    { encoding: "utf-8" },
  );
  return manifest;
}
