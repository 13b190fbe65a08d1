import { beforeAll, describe, expect, it } from "vitest";
import { execFileSync } from "node:child_process";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";
import { fileURLToPath } from "node:url";
import { convert, Manifest } from "../src/convert.js";
import { assemble } from "../src/planetoid.js";
import { verify, verifyExpectedCounts } from "../src/verify.js";

const HERE = path.dirname(fileURLToPath(import.meta.url));
const RAW = path.join(HERE, "fixtures", "raw");

let outDir: string;
let manifest: Manifest;

beforeAll(() => {
  outDir = fs.mkdtempSync(path.join(os.tmpdir(), "ingest-toy-"));
  manifest = convert(assemble(RAW, "toy"), outDir);
});

describe("reassembly", () => {
  it("restores counts including the gap node", () => {
    const graph = assemble(RAW, "toy");
    expect(graph.n).toBe(10);
    expect(graph.d).toBe(4);
    expect(graph.nClasses).toBe(3);
    expect(graph.isolated).toEqual([8]);
  });

  it("un-shuffles the test rows back to their node ids", () => {
    const graph = assemble(RAW, "toy");
    // node 9's feature row carries 2.0 at column 9 % 4 == 1
    expect(graph.features[9 * 4 + 1]).toBe(2.0);
    expect(graph.features[6 * 4 + 2]).toBe(2.0);
    expect(graph.labels[9]).toBe(9 % 3);
    expect(graph.labels[6]).toBe(6 % 3);
  });

  it("keeps the gap node with zero features and class 0", () => {
    const graph = assemble(RAW, "toy");
    for (let j = 0; j < 4; j++) expect(graph.features[8 * 4 + j]).toBe(0);
    expect(graph.labels[8]).toBe(0);
    // incident edges survive: 2-8 came from the raw adjacency
    expect(graph.edges).toContainEqual([2, 8]);
  });

  it("deduplicates edges and drops self-loops", () => {
    const graph = assemble(RAW, "toy");
    const asStrings = graph.edges.map(([u, v]) => `${u},${v}`);
    expect(new Set(asStrings).size).toBe(asStrings.length);
    expect(graph.edges.every(([u, v]) => u < v)).toBe(true);
    expect(asStrings).not.toContain("3,3");
    expect(graph.edges.length).toBe(10);
  });
});

describe("conversion", () => {
  it("emits the canonical files and a consistent manifest", () => {
    for (const file of ["meta.json", "features.csv", "labels.csv", "edges.csv", "manifest.json"]) {
      expect(fs.existsSync(path.join(outDir, file))).toBe(true);
    }
    expect(manifest.n).toBe(10);
    expect(manifest.edges).toBe(10);
  });

  it("is deterministic byte for byte", () => {
    const again = fs.mkdtempSync(path.join(os.tmpdir(), "ingest-toy2-"));
    convert(assemble(RAW, "toy"), again);
    for (const file of ["meta.json", "features.csv", "labels.csv", "edges.csv", "manifest.json"]) {
      expect(fs.readFileSync(path.join(again, file))).toEqual(
        fs.readFileSync(path.join(outDir, file)),
      );
    }
  });

  it("passes verification fresh and fails after truncation", () => {
    expect(verify(outDir, manifest).ok).toBe(true);

    const broken = fs.mkdtempSync(path.join(os.tmpdir(), "ingest-broken-"));
    convert(assemble(RAW, "toy"), broken);
    const labels = path.join(broken, "labels.csv");
    const lines = fs.readFileSync(labels, "utf-8").split("\n");
    fs.writeFileSync(labels, lines.slice(0, -2).join("\n") + "\n");
    const report = verify(broken, manifest);
    expect(report.ok).toBe(false);
    expect(report.failures.some((f) => f.includes("labels.csv"))).toBe(true);
  });

  it("checks published dataset counts by name", () => {
    expect(verifyExpectedCounts("toy", manifest)).toEqual([]);
    expect(
      verifyExpectedCounts("cora", { ...manifest, n: 2708, d: 1433, c: 7 }),
    ).toEqual([]);
    expect(verifyExpectedCounts("cora", manifest).length).toBeGreaterThan(0);
  });
});

describe("cross-component agreement", () => {
  it("the converted directory satisfies the primary loader's ingest-check", () => {
    let stdout: string;
    try {
      stdout = execFileSync(
        "python3",
        ["-m", "unlearn_attack.cli", "ingest-check", "--dataset", outDir],
        { encoding: "utf-8", cwd: path.join(HERE, "..", "..") },
      );
    } catch (err) {
      const error = err as { status?: number; stderr?: string; message: string };
      if (error.status === undefined) return; // python unavailable; nothing to compare
      throw new Error(`ingest-check rejected the directory: ${error.stderr ?? error.message}`);
    }
    expect(stdout).toContain("ok:");
    expect(stdout).toContain("n=10");
    expect(stdout).toContain("d=4");
    expect(stdout).toContain("c=3");
    expect(stdout).toContain("edges=10");
  });
});
