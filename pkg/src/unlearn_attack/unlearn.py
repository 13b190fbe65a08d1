"""Node unlearning operators: the retention/forgetting objective, multi-step
gradient-ascent unlearning, a differentiable one-step approximation, and a
retrain-from-scratch oracle.

The objective g descends the retained nodes' loss while ascending the
forgotten nodes' loss; both terms are per-set means so the published
unlearning rate (0.1) yields stable updates regardless of set sizes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import NonFiniteError, Record, Tensor
from .graphs import Graph, normalize_adjacency
from .models import (
    ModelParams,
    TrainConfig,
    forward_logits,
    mean_ce_weights,
    param_arrays,
    train,
    with_arrays,
)

UNLEARN_METHODS = ("ga_multi", "one_step", "retrain")


@dataclass(frozen=True)
class UnlearnRequest:
    """Which labeled nodes to forget, and how."""

    nodes: np.ndarray
    method: str = "ga_multi"
    gamma: float = 1.0
    eta: float = 0.1
    steps: int = 25

    def __post_init__(self):
        object.__setattr__(self, "nodes", np.asarray(self.nodes, dtype=np.int64))
        if self.method not in UNLEARN_METHODS:
            raise ValueError(f"method must be one of {UNLEARN_METHODS}")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.eta < 0:
            raise ValueError("eta must be >= 0")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")


def _forget_mask(n: int, v_un: np.ndarray, labeled_mask: np.ndarray) -> np.ndarray:
    mask = np.zeros(n, dtype=bool)
    if v_un.size:
        if v_un.min() < 0 or v_un.max() >= n:
            raise ValueError(f"unlearn node index outside [0, {n})")
        mask[v_un] = True
    if np.any(mask & ~labeled_mask):
        raise ValueError("unlearn set must be a subset of the labeled nodes")
    return mask


def objective_from_logits(
    rec: Record,
    logits: Tensor,
    labels: np.ndarray,
    labeled_mask: np.ndarray,
    v_un: np.ndarray,
    gamma: float,
) -> Tensor:
    """retention mean CE minus gamma * forgetting mean CE, from shared logits."""
    forget = _forget_mask(logits.shape[0], np.asarray(v_un, dtype=np.int64), labeled_mask)
    retain = labeled_mask & ~forget
    g = rec.masked_cross_entropy(logits, labels, mean_ce_weights(retain))
    if forget.any() and gamma != 0:
        forget_term = rec.masked_cross_entropy(logits, labels, mean_ce_weights(forget))
        g = rec.subtract(g, rec.scalar_multiply(forget_term, gamma))
    return g


def unlearn_objective(
    rec: Record,
    wa: Tensor,
    wx: Tensor,
    theta: list[Tensor],
    params: ModelParams,
    v_un,
    gamma: float,
    labels: np.ndarray,
    labeled_mask: np.ndarray,
) -> Tensor:
    """The unlearning objective, differentiable in theta and in the graph."""
    a_hat = normalize_adjacency(rec, wa)
    logits = forward_logits(rec, a_hat, wx, theta, params)
    return objective_from_logits(rec, logits, labels, labeled_mask, np.asarray(v_un), gamma)


def one_step_from_logits(
    rec: Record,
    logits: Tensor,
    theta: list[Tensor],
    labels: np.ndarray,
    labeled_mask: np.ndarray,
    v_un: np.ndarray,
    gamma: float,
    eta: float,
) -> list[Tensor]:
    g = objective_from_logits(rec, logits, labels, labeled_mask, v_un, gamma)
    grads = rec.gradient(g, theta)
    return [rec.subtract(w, rec.scalar_multiply(gw, eta)) for w, gw in zip(theta, grads)]


def one_step_unlearn(
    rec: Record,
    wa: Tensor,
    wx: Tensor,
    theta: list[Tensor],
    params: ModelParams,
    request: UnlearnRequest,
    labels: np.ndarray,
    labeled_mask: np.ndarray,
) -> list[Tensor]:
    """Single gradient step on the unlearning objective, emitted on the record
    so the result stays differentiable with respect to wa and wx."""
    a_hat = normalize_adjacency(rec, wa)
    logits = forward_logits(rec, a_hat, wx, theta, params)
    return one_step_from_logits(
        rec, logits, theta, labels, labeled_mask, request.nodes, request.gamma, request.eta
    )


def ga_unlearn(
    wa: np.ndarray,
    wx: np.ndarray,
    params: ModelParams,
    request: UnlearnRequest,
    labels: np.ndarray,
    labeled_mask: np.ndarray,
) -> tuple[ModelParams, bool]:
    """Multi-step gradient-ascent unlearning (victim-side operator).

    Returns the unlearned parameters and a divergence flag; if the objective
    or an update turns non-finite the last finite iterate is returned with the
    flag set.
    """
    arrays = [w.copy() for w in param_arrays(params)]
    for _ in range(request.steps):
        rec = Record()
        wa_t = rec.leaf(wa)
        wx_t = rec.leaf(wx)
        theta = [rec.leaf(w) for w in arrays]
        try:
            new_theta = one_step_unlearn(
                rec, wa_t, wx_t, theta, with_arrays(params, arrays), request, labels, labeled_mask
            )
        except NonFiniteError:
            return with_arrays(params, arrays), True
        arrays = [t.values for t in new_theta]
    return with_arrays(params, arrays), False


def retrain_unlearn(
    graph: Graph, v_un, cfg: TrainConfig, arch: str = "gcn"
) -> tuple[ModelParams, np.ndarray]:
    """Remove the nodes and every incident edge, retrain from scratch.

    Returns the retrained parameters and the kept-node index array (position i
    of the reduced graph corresponds to original node kept[i]).
    """
    from .graphs import dense_adjacency, normalize_adjacency_dense

    v_un = np.asarray(v_un, dtype=np.int64)
    _forget_mask(graph.n, v_un, graph.labeled_mask)
    keep = np.ones(graph.n, dtype=bool)
    keep[v_un] = False
    kept = np.flatnonzero(keep)
    labeled = graph.labeled_mask[kept]
    if labeled.sum() == 0:
        raise ValueError("retrain_unlearn: no labeled nodes remain")
    adj = dense_adjacency(graph)[np.ix_(kept, kept)]
    a_hat = normalize_adjacency_dense(adj)
    params = train(
        a_hat, graph.features[kept], graph.labels[kept], labeled, graph.n_classes, cfg, arch
    )
    return params, kept
