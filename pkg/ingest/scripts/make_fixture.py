#!/usr/bin/env python3
"""Generate the miniature distribution-format fixture used by the tests.

Writes ind.toy.{x,y,tx,ty,allx,ally,graph,test.index} into test/fixtures/raw.
The layout mirrors the real files: pickled scipy CSR feature blocks, pickled
one-hot label arrays, a pickled defaultdict adjacency, and a shuffled
test-index file with one gap (an isolated node without features), so the
reassembly path that handles the citeseer quirk is exercised.

Ground truth (node ids after reassembly):
  n = 10 nodes: 0..5 from allx, 6..9 test span (ids 6, 7, 9 in tx; 8 isolated)
  d = 4 features, c = 3 classes
"""

import pickle
from collections import defaultdict
from pathlib import Path

import numpy as np
import scipy.sparse as sp

OUT = Path(__file__).parent.parent / "test" / "fixtures" / "raw"
OUT.mkdir(parents=True, exist_ok=True)

rng = np.random.default_rng(42)

d, c = 4, 3
allx_dense = np.zeros((6, d), dtype=np.float32)
for i in range(6):
    allx_dense[i, i % d] = 1.0
    allx_dense[i, (i + 1) % d] = float(i + 1)
ally = np.zeros((6, c), dtype=np.int32)
for i in range(6):
    ally[i, i % c] = 1

# labeled-train block = first 3 rows
x_dense = allx_dense[:3]
y = ally[:3]

# test rows for node ids 6, 7, 9 -- written SHUFFLED as 9, 6, 7; node 8 is the gap
test_order = [9, 6, 7]
tx_dense = np.zeros((3, d), dtype=np.float32)
ty = np.zeros((3, c), dtype=np.int32)
for row, node in enumerate(test_order):
    tx_dense[row, node % d] = 2.0
    ty[row, node % c] = 1

graph = defaultdict(list)
edges = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (6, 7), (7, 9), (0, 9), (2, 8)]
for u, v in edges:
    graph[u].append(v)
    graph[v].append(u)
graph[3].append(3)  # self-loop: must be dropped
graph[1].append(2)  # duplicate direction: must be deduplicated

blobs = {
    "x": sp.csr_matrix(x_dense),
    "y": y,
    "tx": sp.csr_matrix(tx_dense),
    "ty": ty,
    "allx": sp.csr_matrix(allx_dense),
    "ally": ally,
    "graph": graph,
}
for suffix, obj in blobs.items():
    with open(OUT / f"ind.toy.{suffix}", "wb") as fh:
        pickle.dump(obj, fh, protocol=2)

(OUT / "ind.toy.test.index").write_text("".join(f"{i}\n" for i in test_order), encoding="utf-8")
print(f"fixture written to {OUT}")
