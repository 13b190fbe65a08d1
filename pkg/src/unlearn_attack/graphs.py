"""Graph data model, canonical dataset format, injected-graph assembly,
adjacency normalization, and k-hop candidate restriction.

Canonical dataset directory layout (all UTF-8, LF newlines, 0-based ids):

* ``meta.json``     -- ``{"n": int, "d": int, "c": int, "name": str}``
* ``features.csv``  -- n rows of d comma-separated reals, no header
* ``labels.csv``    -- n rows, one integer in [0, c) each
* ``edges.csv``     -- one ``u,v`` pair per line with u < v, deduplicated
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .engine import Record, Tensor

#: Graphs above this node count are rejected by dense assembly; the attack
#: math densifies adjacency and is intended for desk-scale runs only.
DENSIFY_LIMIT = 25_000


class DatasetError(ValueError):
    """Malformed canonical dataset directory."""


@dataclass(frozen=True)
class Graph:
    """A transductive node-classification instance.

    ``labeled_mask`` marks the training nodes; the unlabeled (test) nodes are
    its complement.  Edges are undirected, stored once with u < v and no
    self-loops.
    """

    features: np.ndarray  # (n, d) float64
    labels: np.ndarray  # (n,) int64 in [0, n_classes)
    edges: np.ndarray  # (E, 2) int64, u < v
    labeled_mask: np.ndarray  # (n,) bool
    n_classes: int
    name: str = ""

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def unlabeled_mask(self) -> np.ndarray:
        return ~self.labeled_mask

    def neighbor_lists(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(self.n)]
        for u, v in self.edges:
            adj[u].append(int(v))
            adj[v].append(int(u))
        return adj

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=np.int64)
        for u, v in self.edges:
            deg[u] += 1
            deg[v] += 1
        return deg


@dataclass(frozen=True)
class InjectionPlan:
    """The attacker's artifact: injected features, edge blocks, labels, budget.

    ``inter`` is (m, n) and ``intra`` (m, m); entries are binary after
    projection but may be any reals in [0, 1] while the attack optimizes.
    ``intra`` is symmetric with a zero diagonal in both regimes.
    """

    features: np.ndarray  # (m, d)
    inter: np.ndarray  # (m, n)
    intra: np.ndarray  # (m, m)
    labels: np.ndarray  # (m,)
    budget: int

    def __post_init__(self):
        m = self.features.shape[0]
        if self.inter.shape[0] != m or self.intra.shape != (m, m):
            raise ValueError(
                f"plan blocks disagree: features {self.features.shape}, "
                f"inter {self.inter.shape}, intra {self.intra.shape}"
            )
        if self.labels.shape != (m,):
            raise ValueError(f"plan needs {m} labels, got {self.labels.shape}")
        if m:
            if not np.allclose(self.intra, self.intra.T):
                raise ValueError("intra block must be symmetric")
            if np.any(np.diag(self.intra) != 0):
                raise ValueError("intra block must have a zero diagonal")
            lo = min(self.inter.min(), self.intra.min())
            hi = max(self.inter.max(), self.intra.max())
            if lo < 0 or hi > 1:
                raise ValueError(f"plan edge entries outside [0, 1]: [{lo}, {hi}]")
        if self.budget < 0:
            raise ValueError("budget must be >= 0")

    @property
    def m(self) -> int:
        return self.features.shape[0]

    def is_binary(self) -> bool:
        return bool(
            np.all((self.inter == 0) | (self.inter == 1))
            and np.all((self.intra == 0) | (self.intra == 1))
        )

    def to_json_dict(self) -> dict:
        if not self.is_binary():
            raise ValueError("only projected (binary) plans serialize to JSON")
        inter_edges = [[int(i), int(j)] for i, j in zip(*np.nonzero(self.inter))]
        iu, ju = np.nonzero(np.triu(self.intra, 1))
        intra_edges = [[int(i), int(j)] for i, j in zip(iu, ju)]
        return {
            "m": self.m,
            "budget": int(self.budget),
            "labels": [int(v) for v in self.labels],
            "x_inj": [[float(v) for v in row] for row in self.features],
            "inter_edges": inter_edges,
            "intra_edges": intra_edges,
        }

    @classmethod
    def from_json_dict(cls, obj: dict, n: int) -> "InjectionPlan":
        m = int(obj["m"])
        features = np.asarray(obj["x_inj"], dtype=np.float64).reshape(m, -1)
        inter = np.zeros((m, n))
        for i, j in obj["inter_edges"]:
            inter[i, j] = 1.0
        intra = np.zeros((m, m))
        for i, j in obj["intra_edges"]:
            intra[i, j] = intra[j, i] = 1.0
        labels = np.asarray(obj["labels"], dtype=np.int64)
        return cls(features, inter, intra, labels, int(obj["budget"]))


@dataclass(frozen=True)
class CandidateSet:
    """Original-graph nodes that injected inter-edges may attach to."""

    nodes: np.ndarray  # sorted candidate indices
    column_mask: np.ndarray  # (n,) bool, True where trainable
    k: int


def empty_plan(graph: Graph, budget: int = 0) -> InjectionPlan:
    return InjectionPlan(
        features=np.zeros((0, graph.d)),
        inter=np.zeros((0, graph.n)),
        intra=np.zeros((0, 0)),
        labels=np.zeros(0, dtype=np.int64),
        budget=budget,
    )


# ----------------------------------------------------------------------
# canonical dataset IO
# ----------------------------------------------------------------------


def _read_meta(path: Path) -> dict:
    meta_path = path / "meta.json"
    if not meta_path.is_file():
        raise DatasetError(f"{meta_path}: missing file")
    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{meta_path}: invalid JSON ({exc})") from exc
    for key in ("n", "d", "c"):
        if key not in meta or int(meta[key]) <= 0:
            raise DatasetError(f"{meta_path}: missing or non-positive '{key}'")
    return meta


def load_dataset(path) -> Graph:
    """Load a canonical dataset directory into a Graph (all nodes unlabeled
    until split_nodes assigns a training mask)."""
    path = Path(path)
    meta = _read_meta(path)
    n, d, c = int(meta["n"]), int(meta["d"]), int(meta["c"])

    feat_path = path / "features.csv"
    if not feat_path.is_file():
        raise DatasetError(f"{feat_path}: missing file")
    try:
        features = np.loadtxt(feat_path, delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError as exc:
        raise DatasetError(f"{feat_path}: {exc}") from exc
    if features.shape != (n, d):
        raise DatasetError(
            f"{feat_path}: expected {n}x{d} matrix, got {features.shape[0]}x{features.shape[1]}"
        )

    labels_path = path / "labels.csv"
    if not labels_path.is_file():
        raise DatasetError(f"{labels_path}: missing file")
    labels = np.zeros(n, dtype=np.int64)
    with open(labels_path, encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().split("\n") if ln != ""]
    if len(lines) != n:
        raise DatasetError(f"{labels_path}: expected {n} rows, found {len(lines)}")
    for i, line in enumerate(lines):
        try:
            value = int(line)
        except ValueError:
            raise DatasetError(f"{labels_path}:{i + 1}: not an integer: {line!r}") from None
        if not 0 <= value < c:
            raise DatasetError(f"{labels_path}:{i + 1}: label {value} outside [0, {c})")
        labels[i] = value

    edges_path = path / "edges.csv"
    if not edges_path.is_file():
        raise DatasetError(f"{edges_path}: missing file")
    seen: set[tuple[int, int]] = set()
    pairs: list[tuple[int, int]] = []
    with open(edges_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise DatasetError(f"{edges_path}:{lineno}: expected 'u,v', got {line!r}")
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise DatasetError(f"{edges_path}:{lineno}: non-integer endpoint") from None
            if u == v:
                raise DatasetError(f"{edges_path}:{lineno}: self-loop {u}")
            lo, hi = (u, v) if u < v else (v, u)
            if not (0 <= lo and hi < n):
                raise DatasetError(f"{edges_path}:{lineno}: endpoint outside [0, {n})")
            if (lo, hi) in seen:
                raise DatasetError(f"{edges_path}:{lineno}: duplicate edge {lo},{hi}")
            seen.add((lo, hi))
            pairs.append((lo, hi))
    edges = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)

    return Graph(
        features=features,
        labels=labels,
        edges=edges,
        labeled_mask=np.zeros(n, dtype=bool),
        n_classes=c,
        name=str(meta.get("name", path.name)),
    )


def split_nodes(graph: Graph, train_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic labeled/unlabeled split with |V_L| = round(fraction * n)."""
    if not 0 < train_fraction < 1:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    n = graph.n
    n_labeled = int(round(train_fraction * n))
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5B17]))
    order = rng.permutation(n)
    labeled = np.zeros(n, dtype=bool)
    labeled[order[:n_labeled]] = True
    return labeled, ~labeled


def with_split(graph: Graph, train_fraction: float, seed: int) -> Graph:
    labeled, _ = split_nodes(graph, train_fraction, seed)
    return replace(graph, labeled_mask=labeled)


# ----------------------------------------------------------------------
# dense assembly and normalization
# ----------------------------------------------------------------------


def dense_adjacency(graph: Graph) -> np.ndarray:
    """Symmetric dense 0/1 adjacency without self-loops."""
    if graph.n > DENSIFY_LIMIT:
        raise ValueError(
            f"graph has {graph.n} nodes; dense attack math is desk-scale only "
            f"(limit {DENSIFY_LIMIT})"
        )
    a = np.zeros((graph.n, graph.n))
    if len(graph.edges):
        u, v = graph.edges[:, 0], graph.edges[:, 1]
        a[u, v] = 1.0
        a[v, u] = 1.0
    return a


def assemble_injected(
    graph: Graph, plan: InjectionPlan
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Build the injected graph's dense blocks.

    Returns (adjacency, features, labels, labeled_mask) of size n + m; all
    injected nodes are labeled.  Works for continuous and binary plans.
    """
    if plan.features.shape[1] != graph.d or plan.inter.shape[1] != graph.n:
        raise ValueError(
            f"plan does not fit graph: features {plan.features.shape}, "
            f"inter {plan.inter.shape}, graph n={graph.n} d={graph.d}"
        )
    a = dense_adjacency(graph)
    if plan.m == 0:
        return a, graph.features.copy(), graph.labels.copy(), graph.labeled_mask.copy()
    n, m = graph.n, plan.m
    wa = np.zeros((n + m, n + m))
    wa[:n, :n] = a
    wa[n:, :n] = plan.inter
    wa[:n, n:] = plan.inter.T
    wa[n:, n:] = plan.intra
    wx = np.vstack([graph.features, plan.features])
    labels = np.concatenate([graph.labels, plan.labels])
    labeled = np.concatenate([graph.labeled_mask, np.ones(m, dtype=bool)])
    return wa, wx, labels, labeled


def normalize_adjacency(rec: Record, a_raw: Tensor) -> Tensor:
    """Symmetric degree normalization with self-loops, recorded differentiably.

    a_hat = D^{-1/2} (a_raw + I) D^{-1/2} where D holds the row sums of
    (a_raw + I).  Continuous entries are fine; every row sum must be positive.
    """
    n = a_raw.shape[0]
    if a_raw.shape != (n, n):
        raise ValueError(f"adjacency must be square, got {a_raw.shape}")
    if a_raw.values.min() < 0:
        raise ValueError("adjacency entries must be >= 0")
    with_loops = rec.add(a_raw, rec.leaf(np.eye(n)))
    deg = rec.matmul(with_loops, rec.leaf(np.ones((n, 1))))
    if deg.values.min() <= 0:
        raise ValueError("normalize_adjacency: non-positive row sum")
    dinv = rec.power(deg, -0.5)
    scale = rec.matmul(dinv, dinv, tb=True)
    return rec.multiply(with_loops, scale)


def normalize_adjacency_dense(a_raw: np.ndarray) -> np.ndarray:
    """Plain-numpy fast path; same formula as the recorded version."""
    n = a_raw.shape[0]
    if a_raw.shape != (n, n):
        raise ValueError(f"adjacency must be square, got {a_raw.shape}")
    if a_raw.min() < 0:
        raise ValueError("adjacency entries must be >= 0")
    with_loops = a_raw + np.eye(n)
    deg = with_loops.sum(axis=1, keepdims=True)
    if deg.min() <= 0:
        raise ValueError("normalize_adjacency: non-positive row sum")
    dinv = deg ** -0.5
    return with_loops * (dinv @ dinv.T)


# ----------------------------------------------------------------------
# k-hop candidate restriction
# ----------------------------------------------------------------------


def _khop_neighborhood(adj: list[list[int]], start: int, k: int) -> set[int]:
    reached = {start}
    frontier = [start]
    for _ in range(k):
        nxt = []
        for u in frontier:
            for v in adj[u]:
                if v not in reached:
                    reached.add(v)
                    nxt.append(v)
        if not nxt:
            break
        frontier = nxt
    return reached


def khop_candidates(
    graph: Graph,
    target_nodes,
    k: int,
    target_sample_fraction: float = 1.0,
    neighbors_per_target: int | None = None,
    seed: int = 0,
) -> CandidateSet:
    """Connection candidates: the k-hop neighborhoods of (a sample of) the
    target nodes.

    With full sampling and no neighbor cap this is the exact BFS union; with
    a cap, each sampled target contributes itself plus at most
    ``neighbors_per_target`` nodes sampled from its k-hop neighborhood.
    """
    targets = np.asarray(list(target_nodes), dtype=np.int64)
    if targets.size and (targets.min() < 0 or targets.max() >= graph.n):
        raise ValueError(f"target node outside [0, {graph.n})")
    if k < 0:
        raise ValueError("k must be >= 0")
    if not 0 < target_sample_fraction <= 1:
        raise ValueError("target_sample_fraction must be in (0, 1]")
    if neighbors_per_target is not None and neighbors_per_target < 0:
        raise ValueError("neighbors_per_target must be >= 0")

    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xCA9D]))
    if target_sample_fraction < 1 and targets.size:
        n_keep = max(1, int(round(target_sample_fraction * targets.size)))
        targets = np.sort(rng.choice(targets, size=n_keep, replace=False))

    adj = graph.neighbor_lists()
    chosen: set[int] = set(int(t) for t in targets)
    for t in targets:
        hood = _khop_neighborhood(adj, int(t), k)
        hood.discard(int(t))
        if neighbors_per_target is None:
            chosen.update(hood)
        elif neighbors_per_target > 0 and hood:
            pool = np.array(sorted(hood))
            take = min(neighbors_per_target, pool.size)
            chosen.update(int(v) for v in rng.choice(pool, size=take, replace=False))

    nodes = np.array(sorted(chosen), dtype=np.int64)
    mask = np.zeros(graph.n, dtype=bool)
    mask[nodes] = True
    return CandidateSet(nodes=nodes, column_mask=mask, k=int(k))
