"""Deterministic synthetic citation-style benchmarks.

Generates graphs with class-conditional sparse bag-of-words features and a
homophilous heavy-tailed edge distribution, then writes them in the canonical
dataset format.  Used for test fixtures and offline demos at the same node,
feature, and class counts as the public citation benchmarks.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class SynthSpec:
    name: str
    n: int
    d: int
    n_classes: int
    avg_degree: float = 4.0
    homophily: float = 0.85
    words_per_doc: float = 18.0
    signature_size: int = 60
    signal: float = 0.7
    label_noise: float = 0.10


CORA_LIKE = SynthSpec("cora", n=2708, d=1433, n_classes=7)
CITESEER_LIKE = SynthSpec(
    "citeseer",
    n=3327,
    d=3703,
    n_classes=6,
    avg_degree=2.8,
    homophily=0.82,
    words_per_doc=14.0,
    label_noise=0.16,
)
TINY = SynthSpec(
    "tiny", n=120, d=24, n_classes=3, avg_degree=4.0, homophily=0.9, words_per_doc=6.0,
    signature_size=6, label_noise=0.05,
)


def generate(spec: SynthSpec, seed: int = 7):
    """Returns (features, labels, edges) arrays for the given spec."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5E6D]))
    n, d, c = spec.n, spec.d, spec.n_classes

    mix = rng.dirichlet(np.full(c, 6.0))
    labels = rng.choice(c, size=n, p=mix).astype(np.int64)

    signatures = [
        rng.choice(d, size=min(spec.signature_size, d), replace=False) for _ in range(c)
    ]
    features = np.zeros((n, d))
    n_words = rng.poisson(spec.words_per_doc, size=n) + 1
    for i in range(n):
        k = n_words[i]
        own = rng.random(k) < spec.signal
        sig = signatures[labels[i]]
        cols = np.where(own, rng.choice(sig, size=k), rng.integers(0, d, size=k))
        features[i, cols] = 1.0

    # heavy-tailed connection propensities, homophilous endpoint choice
    weight = rng.pareto(2.5, size=n) + 1.0
    by_class = [np.flatnonzero(labels == cl) for cl in range(c)]
    class_p = [weight[idx] / weight[idx].sum() for idx in by_class]
    all_p = weight / weight.sum()
    target_edges = int(round(spec.avg_degree * n / 2))
    seen: set[tuple[int, int]] = set()
    pairs: list[tuple[int, int]] = []
    guard = 0
    while len(pairs) < target_edges and guard < 50 * target_edges:
        guard += 1
        u = int(rng.choice(n, p=all_p))
        if rng.random() < spec.homophily:
            cl = labels[u]
            v = int(rng.choice(by_class[cl], p=class_p[cl]))
        else:
            v = int(rng.choice(n, p=all_p))
        if u == v:
            continue
        lo, hi = (u, v) if u < v else (v, u)
        if (lo, hi) in seen:
            continue
        seen.add((lo, hi))
        pairs.append((lo, hi))
    edges = np.asarray(sorted(pairs), dtype=np.int64).reshape(-1, 2)

    flip = rng.random(n) < spec.label_noise
    if flip.any():
        offsets = rng.integers(1, c, size=int(flip.sum()))
        labels[flip] = (labels[flip] + offsets) % c
    return features, labels, edges


def write_dataset(out_dir, spec: SynthSpec, seed: int = 7) -> Path:
    """Generate and write the canonical dataset directory; returns its path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    features, labels, edges = generate(spec, seed)
    meta = (
        '{"n": %d, "d": %d, "c": %d, "name": "%s"}\n'
        % (spec.n, spec.d, spec.n_classes, spec.name)
    )
    (out / "meta.json").write_text(meta, encoding="utf-8")
    with open(out / "features.csv", "w", encoding="utf-8", newline="\n") as fh:
        for row in features:
            fh.write(",".join("1" if v else "0" for v in row))
            fh.write("\n")
    with open(out / "labels.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(str(int(v)) for v in labels))
        fh.write("\n")
    with open(out / "edges.csv", "w", encoding="utf-8", newline="\n") as fh:
        for u, v in edges:
            fh.write(f"{u},{v}\n")
    return out
