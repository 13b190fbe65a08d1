"""GCN and SGC forward passes, full-batch training, metrics, pseudo-labels,
and JSON checkpoints.

Both architectures read a pre-normalized adjacency.  Training is plain
full-batch gradient descent on the mean cross-entropy over labeled nodes plus
L2 weight decay; all randomness comes from the config seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .engine import Record, Tensor


@dataclass
class TrainConfig:
    lr: float = 0.5
    epochs: int = 200
    weight_decay: float = 5e-4
    seed: int = 0
    hidden: int = 16
    k_prop: int = 2

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be > 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")


@dataclass(frozen=True)
class GCNParams:
    w1: np.ndarray  # (d, hidden)
    w2: np.ndarray  # (hidden, C)

    @property
    def hidden(self) -> int:
        return self.w1.shape[1]


@dataclass(frozen=True)
class SGCParams:
    w: np.ndarray  # (d, C)
    k_prop: int = 2


ModelParams = GCNParams | SGCParams


def _glorot(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    s = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-s, s, size=(rows, cols))


def init_params(
    arch: str, d: int, n_classes: int, seed: int, hidden: int = 16, k_prop: int = 2
) -> ModelParams:
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x1417]))
    if arch == "gcn":
        return GCNParams(w1=_glorot(rng, d, hidden), w2=_glorot(rng, hidden, n_classes))
    if arch == "sgc":
        return SGCParams(w=_glorot(rng, d, n_classes), k_prop=k_prop)
    raise ValueError(f"unknown architecture '{arch}'")


def arch_of(params: ModelParams) -> str:
    return "gcn" if isinstance(params, GCNParams) else "sgc"


def param_arrays(params: ModelParams) -> list[np.ndarray]:
    if isinstance(params, GCNParams):
        return [params.w1, params.w2]
    return [params.w]


def with_arrays(params: ModelParams, arrays: list[np.ndarray]) -> ModelParams:
    if isinstance(params, GCNParams):
        return GCNParams(w1=arrays[0], w2=arrays[1])
    return SGCParams(w=arrays[0], k_prop=params.k_prop)


# ----------------------------------------------------------------------
# forward passes
# ----------------------------------------------------------------------


def gcn_forward(rec: Record, a_hat: Tensor, x: Tensor, w1: Tensor, w2: Tensor) -> Tensor:
    """Two-layer graph convolution: a_hat @ relu(a_hat @ x @ w1) @ w2.

    Products associate as a_hat @ (x @ w1) so the n x n matrix only ever
    multiplies skinny matrices.
    """
    h = rec.relu(rec.matmul(a_hat, rec.matmul(x, w1)))
    return rec.matmul(a_hat, rec.matmul(h, w2))


def sgc_forward(rec: Record, a_hat: Tensor, x: Tensor, w: Tensor, k_prop: int) -> Tensor:
    """Simplified graph convolution: a_hat^k @ x @ w (k = 0 is a linear model)."""
    if k_prop < 0:
        raise ValueError("k_prop must be >= 0")
    out = rec.matmul(x, w)
    for _ in range(k_prop):
        out = rec.matmul(a_hat, out)
    return out


def forward_logits(
    rec: Record, a_hat: Tensor, x: Tensor, weights: list[Tensor], params: ModelParams
) -> Tensor:
    """Architecture dispatch with weights supplied as recorded tensors."""
    if isinstance(params, GCNParams):
        return gcn_forward(rec, a_hat, x, weights[0], weights[1])
    return sgc_forward(rec, a_hat, x, weights[0], params.k_prop)


def logits_dense(params: ModelParams, a_hat: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Plain-numpy forward for prediction-only paths (metrics, pseudo-labels)."""
    if isinstance(params, GCNParams):
        h = np.maximum(a_hat @ (x @ params.w1), 0.0)
        return a_hat @ (h @ params.w2)
    out = x @ params.w
    for _ in range(params.k_prop):
        out = a_hat @ out
    return out


# ----------------------------------------------------------------------
# training and metrics
# ----------------------------------------------------------------------


def mean_ce_weights(mask: np.ndarray) -> np.ndarray:
    """Per-node weights averaging cross-entropy over the masked set."""
    count = int(mask.sum())
    if count == 0:
        return np.zeros(mask.shape[0])
    return mask.astype(np.float64) / count


def train(
    a_hat: np.ndarray,
    x: np.ndarray,
    labels: np.ndarray,
    labeled_mask: np.ndarray,
    n_classes: int,
    cfg: TrainConfig,
    arch: str = "gcn",
) -> ModelParams:
    """Full-batch gradient descent on masked mean cross-entropy + weight decay."""
    if labeled_mask.sum() == 0:
        raise ValueError("train: labeled set is empty")
    params = init_params(arch, x.shape[1], n_classes, cfg.seed, cfg.hidden, cfg.k_prop)
    arrays = [w.copy() for w in param_arrays(params)]
    weights_vec = mean_ce_weights(labeled_mask)
    for _ in range(cfg.epochs):
        rec = Record()
        ah = rec.leaf(a_hat)
        xx = rec.leaf(x)
        wt = [rec.leaf(w) for w in arrays]
        logits = forward_logits(rec, ah, xx, wt, with_arrays(params, arrays))
        loss = rec.masked_cross_entropy(logits, labels, weights_vec)
        grads = rec.gradient(loss, wt)
        arrays = [
            w - cfg.lr * (g.values + cfg.weight_decay * w) for w, g in zip(arrays, grads)
        ]
    return with_arrays(params, arrays)


def training_loss(
    params: ModelParams,
    a_hat: np.ndarray,
    x: np.ndarray,
    labels: np.ndarray,
    labeled_mask: np.ndarray,
) -> float:
    rec = Record()
    wt = [rec.leaf(w) for w in param_arrays(params)]
    logits = forward_logits(rec, rec.leaf(a_hat), rec.leaf(x), wt, params)
    return rec.masked_cross_entropy(logits, labels, mean_ce_weights(labeled_mask)).item()


def evaluate(
    params: ModelParams,
    a_hat: np.ndarray,
    x: np.ndarray,
    labels: np.ndarray,
    node_mask: np.ndarray,
) -> dict:
    """Accuracy and macro-F1 on the masked nodes; argmax ties resolve to the
    lowest class index, absent classes contribute zero F1."""
    if node_mask.sum() == 0:
        raise ValueError("evaluate: node set is empty")
    logits = logits_dense(params, a_hat, x)
    preds = logits.argmax(axis=1)
    return prediction_metrics(preds[node_mask], labels[node_mask], logits.shape[1])


def prediction_metrics(preds: np.ndarray, truth: np.ndarray, n_classes: int) -> dict:
    accuracy = float((preds == truth).mean())
    f1s = []
    for c in range(n_classes):
        tp = int(np.sum((preds == c) & (truth == c)))
        fp = int(np.sum((preds == c) & (truth != c)))
        fn = int(np.sum((preds != c) & (truth == c)))
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1s.append(2 * precision * recall / (precision + recall) if precision + recall else 0.0)
    return {"accuracy": accuracy, "macro_f1": float(np.mean(f1s))}


def pseudo_labels(
    params: ModelParams, a_hat: np.ndarray, x: np.ndarray
) -> np.ndarray:
    """Argmax predictions for every node; callers read the unlabeled positions."""
    return logits_dense(params, a_hat, x).argmax(axis=1).astype(np.int64)


# ----------------------------------------------------------------------
# checkpoints
# ----------------------------------------------------------------------


def save_params(params: ModelParams, path) -> None:
    arrays = param_arrays(params)
    obj = {
        "arch": arch_of(params),
        "shapes": [list(w.shape) for w in arrays],
        "weights": [[float(v) for v in w.ravel(order="C")] for w in arrays],
    }
    if isinstance(params, SGCParams):
        obj["k_prop"] = params.k_prop
    Path(path).write_text(json.dumps(obj), encoding="utf-8")


def load_params(path) -> ModelParams:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    arrays = [
        np.asarray(flat, dtype=np.float64).reshape(shape)
        for flat, shape in zip(obj["weights"], obj["shapes"])
    ]
    if obj["arch"] == "gcn":
        return GCNParams(w1=arrays[0], w2=arrays[1])
    if obj["arch"] == "sgc":
        return SGCParams(w=arrays[0], k_prop=int(obj.get("k_prop", 2)))
    raise ValueError(f"unknown checkpoint architecture '{obj['arch']}'")
