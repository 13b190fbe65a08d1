/**
 * Reassemble a citation benchmark from its distribution files.
 *
 * Each dataset ships as eight files: pickled feature blocks for the labeled
 * training nodes (x), the test nodes (tx) and all non-test nodes (allx);
 * matching one-hot label blocks (y, ty, ally); a pickled adjacency dict
 * (graph); and a plain-text list of test node ids (test.index).
 *
 * The test rows arrive shuffled and -- in citeseer -- with gaps for isolated
 * papers that have no feature vector.  Reassembly stacks allx over a
 * gap-padded tx, then permutes the test block back into node-id order.
 * Isolated nodes keep zero features and label 0; they stay in the graph.
 */

import * as fs from "node:fs";
import * as path from "node:path";
import { CsrMatrix, loads, toCsr, toGraphDict, toMatrix } from "./pickle.js";

export const SUFFIXES = ["x", "y", "tx", "ty", "allx", "ally", "graph", "test.index"] as const;

export interface AssembledGraph {
  name: string;
  n: number;
  d: number;
  nClasses: number;
  /** dense row-major n x d */
  features: Float64Array;
  labels: Int32Array;
  /** undirected, deduplicated, u < v */
  edges: Array<[number, number]>;
  isolated: number[];
}

function densify(csr: CsrMatrix): Float64Array {
  const out = new Float64Array(csr.rows * csr.cols);
  for (let i = 0; i < csr.rows; i++) {
    for (let k = csr.indptr[i]; k < csr.indptr[i + 1]; k++) {
      out[i * csr.cols + csr.indices[k]] = csr.data[k];
    }
  }
  return out;
}

function loadPickle(dir: string, name: string, suffix: string): unknown {
  const file = path.join(dir, `ind.${name}.${suffix}`);
  if (!fs.existsSync(file)) throw new Error(`${file}: missing distribution file`);
  try {
    return loads(fs.readFileSync(file));
  } catch (err) {
    throw new Error(`${file}: ${(err as Error).message}`);
  }
}

function argmaxRow(row: Float64Array): number {
  let best = 0;
  for (let j = 1; j < row.length; j++) if (row[j] > row[best]) best = j;
  return best;
}

export function assemble(rawDir: string, name: string): AssembledGraph {
  const allx = toCsr(loadPickle(rawDir, name, "allx"));
  const tx = toCsr(loadPickle(rawDir, name, "tx"));
  const ally = toMatrix(loadPickle(rawDir, name, "ally"));
  const ty = toMatrix(loadPickle(rawDir, name, "ty"));
  const graph = toGraphDict(loadPickle(rawDir, name, "graph"));

  const indexFile = path.join(rawDir, `ind.${name}.test.index`);
  if (!fs.existsSync(indexFile)) throw new Error(`${indexFile}: missing distribution file`);
  const testIdx = fs
    .readFileSync(indexFile, "utf-8")
    .split("\n")
    .filter((line) => line.trim() !== "")
    .map((line) => {
      const v = Number(line.trim());
      if (!Number.isInteger(v)) throw new Error(`${indexFile}: bad index line '${line}'`);
      return v;
    });

  const d = allx.cols;
  const nClasses = ally.cols;
  if (tx.cols !== d || ty.cols !== nClasses)
    throw new Error(`${name}: test blocks disagree with allx/ally dimensions`);

  const minTest = Math.min(...testIdx);
  const maxTest = Math.max(...testIdx);
  const testSpan = maxTest - minTest + 1; // > tx.rows when isolated nodes exist
  const n = allx.rows + testSpan;
  if (minTest !== allx.rows)
    throw new Error(`${name}: test ids start at ${minTest}, expected ${allx.rows}`);

  const features = new Float64Array(n * d);
  features.set(densify(allx), 0);
  const labels = new Int32Array(n); // gaps default to class 0
  for (let i = 0; i < allx.rows; i++) {
    labels[i] = argmaxRow(ally.data.subarray(i * nClasses, (i + 1) * nClasses));
  }

  // scatter the shuffled test rows to their true node ids
  const txDense = densify(tx);
  const seen = new Set<number>();
  testIdx.forEach((nodeId, row) => {
    if (nodeId < minTest || nodeId > maxTest) throw new Error(`${name}: test id ${nodeId} out of span`);
    if (seen.has(nodeId)) throw new Error(`${name}: duplicate test id ${nodeId}`);
    seen.add(nodeId);
    features.set(txDense.subarray(row * d, (row + 1) * d), nodeId * d);
    labels[nodeId] = argmaxRow(ty.data.subarray(row * nClasses, (row + 1) * nClasses));
  });
  const isolated: number[] = [];
  for (let nodeId = minTest; nodeId <= maxTest; nodeId++) {
    if (!seen.has(nodeId)) isolated.push(nodeId);
  }

  const edgeSet = new Set<number>();
  const edges: Array<[number, number]> = [];
  for (const [u, neighbors] of graph) {
    for (const v of neighbors) {
      if (u === v) continue;
      if (u < 0 || v < 0 || u >= n || v >= n)
        throw new Error(`${name}: edge endpoint ${u},${v} outside [0, ${n})`);
      const lo = Math.min(u, v);
      const hi = Math.max(u, v);
      const key = lo * n + hi;
      if (!edgeSet.has(key)) {
        edgeSet.add(key);
        edges.push([lo, hi]);
      }
    }
  }
  edges.sort((a, b) => (a[0] - b[0]) || (a[1] - b[1]));

  return { name, n, d, nClasses, features, labels, edges, isolated };
}
