"""Bi-level node-injection attack against gradient-based unlearning, plus the
greedy budget projection, benign-set sampling, and five heuristic baselines.

The optimizer maximizes post-unlearning damage: it differentiates the test
cross-entropy of a one-step-unlearned surrogate with respect to the injected
features and edge logits, both through the forward pass and through the inner
gradient itself.  Edges live as free logits mapped through a sigmoid and are
projected to binary top-B rows only once, after the last ascent step.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .engine import EngineError, Record, Tensor, _stable_sigmoid
from .graphs import (
    CandidateSet,
    Graph,
    InjectionPlan,
    assemble_injected,
    dense_adjacency,
    khop_candidates,
    normalize_adjacency,
)
from .models import ModelParams, forward_logits, param_arrays
from .unlearn import one_step_from_logits

log = logging.getLogger(__name__)

BASELINE_KINDS = ("random", "copy", "newcopy", "testcopy", "testlink")
INIT_STRATEGIES = BASELINE_KINDS

#: Logits used to lift a binary initialization into free-variable space:
#: sigmoid(EDGE_ON) = 0.9, sigmoid(EDGE_OFF) = 0.01, frozen entries ~ 0.
EDGE_ON = float(np.log(0.9 / 0.1))
EDGE_OFF = float(np.log(0.01 / 0.99))
EDGE_FROZEN = float(np.log(1e-6 / (1 - 1e-6)))


class AttackError(RuntimeError):
    """Attack optimization failed (non-finite loss, bad configuration)."""


@dataclass
class CandidateConfig:
    k: int = 1
    target_sample_fraction: float = 0.1
    neighbors_per_target: int | None = 3


@dataclass
class AttackConfig:
    steps: int = 200  # T
    eta_x: float = 5e-4
    eta_a: float = 0.5
    lam: float = 1.0
    budget: int = 5  # B, edges per injected node
    inject_fraction: float = 0.05  # m as a fraction of n
    init_strategy: str = "random"
    benign_set_size: int | None = None  # None -> same size as the injected set
    candidates: CandidateConfig | None = None
    fix_intra: bool = False
    #: project injected features into the original features' value range after
    #: every ascent step; keeps the poisoned graph trainable (pre-unlearning
    #: utility) and the optimization numerically sane
    clamp_features: bool = True
    gamma: float = 1.0
    eta_un: float = 0.1
    #: the one-step solver stands in for the victim's whole unlearning run, so
    #: its single step spans eta_un * inner_horizon (the assumed step count)
    inner_horizon: int = 25
    refresh_every: int = 0  # re-train the surrogate every R steps; 0 = frozen
    seed: int = 0

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.eta_x < 0 or self.eta_a < 0:
            raise ValueError("step sizes must be >= 0")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        if not 0 < self.inject_fraction <= 1:
            raise ValueError("inject_fraction must be in (0, 1]")
        if self.init_strategy not in INIT_STRATEGIES:
            raise ValueError(f"init_strategy must be one of {INIT_STRATEGIES}")

    def n_injected(self, n: int) -> int:
        return max(1, int(round(self.inject_fraction * n)))


@dataclass
class AttackState:
    """Free optimization variables plus the per-step loss trace.

    Injected labels ride along unchanged; only features and edge logits are
    optimized.
    """

    x_inj: np.ndarray  # (m, d)
    inter_free: np.ndarray  # (m, n) logits
    intra_upper: np.ndarray | None  # (m, m), strict upper triangle holds logits
    labels: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    trace: list[dict] = field(default_factory=list)


@dataclass
class AttackResult:
    plan: InjectionPlan
    state: AttackState
    pseudo: np.ndarray
    benign_set: np.ndarray


# ----------------------------------------------------------------------
# projection and sampling
# ----------------------------------------------------------------------


def top_b_row(row: np.ndarray, budget: int) -> np.ndarray:
    """Binary row keeping the B largest entries, ties to the lowest index."""
    out = np.zeros_like(row)
    if budget <= 0:
        return out
    budget = min(budget, row.size)
    order = np.argsort(-row, kind="stable")
    out[order[:budget]] = 1.0
    return out


def project_topb(
    inter: np.ndarray, intra: np.ndarray, budget: int
) -> tuple[np.ndarray, np.ndarray]:
    """Project continuous [0,1] blocks onto binary rows with at most B ones.

    Per injected row of [inter | intra] the top-B entries are kept (ties to
    the lowest column, the self column excluded), then the intra block is
    symmetrized by OR.  Rows pushed over budget by the OR drop their
    lowest-scoring intra pairs until every row is feasible again.
    """
    m, n = inter.shape
    width = n + m - 1 if m else n
    if budget > width:
        log.warning("budget %d exceeds %d possible edges per row; clamping", budget, width)
        budget = width
    combined = np.hstack([inter, intra])
    for i in range(m):
        combined[i, n + i] = -1.0  # self column never selected
    binary = np.vstack([top_b_row(combined[i], budget) for i in range(m)]) if m else combined
    inter_b = binary[:, :n] if m else np.zeros_like(inter)
    intra_b = binary[:, n:] if m else np.zeros_like(intra)
    intra_b = np.maximum(intra_b, intra_b.T)

    # repair rows the OR pushed over budget, cheapest intra pair first
    row_sums = inter_b.sum(axis=1) + intra_b.sum(axis=1)
    while np.any(row_sums > budget):
        i = int(np.argmax(row_sums))
        ones = np.flatnonzero(intra_b[i])
        if ones.size == 0:
            raise AttackError("projection repair: over-budget row without intra edges")
        j = int(ones[np.argsort(intra[i, ones], kind="stable")[0]])
        intra_b[i, j] = intra_b[j, i] = 0.0
        row_sums = inter_b.sum(axis=1) + intra_b.sum(axis=1)
    return inter_b, intra_b


def sample_benign_set(labeled_idx, exclude, size: int, seed: int) -> np.ndarray:
    """Uniform sample without replacement from the labeled nodes minus exclude."""
    labeled_idx = np.asarray(labeled_idx, dtype=np.int64)
    pool = np.setdiff1d(labeled_idx, np.asarray(exclude, dtype=np.int64))
    if size > pool.size:
        raise ValueError(f"benign set of {size} requested from pool of {pool.size}")
    if size == 0:
        return np.zeros(0, dtype=np.int64)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xBE9]))
    return np.sort(rng.choice(pool, size=size, replace=False))


# ----------------------------------------------------------------------
# heuristic baselines
# ----------------------------------------------------------------------


def _capped_edges(rng, neighbors: np.ndarray, budget: int) -> np.ndarray:
    if neighbors.size <= budget:
        return neighbors
    return rng.choice(neighbors, size=budget, replace=False)


def baseline_inject(graph: Graph, kind: str, m: int, budget: int, seed: int) -> InjectionPlan:
    """One of the heuristic injection strategies; always budget-feasible."""
    if kind not in BASELINE_KINDS:
        raise ValueError(f"kind must be one of {BASELINE_KINDS}")
    if m < 1:
        raise ValueError("m must be >= 1")
    if kind in ("copy", "newcopy", "testcopy", "testlink") and m > graph.n:
        raise ValueError(f"cannot copy {m} nodes from a {graph.n}-node graph")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xBA5E]))
    n, d = graph.n, graph.d
    adj = graph.neighbor_lists()
    labeled_idx = np.flatnonzero(graph.labeled_mask)
    unlabeled_idx = np.flatnonzero(graph.unlabeled_mask)
    inter = np.zeros((m, n))
    intra = np.zeros((m, m))

    if kind == "random":
        mu = graph.features.mean(axis=0)
        sd = graph.features.std(axis=0)
        features = rng.normal(mu, np.maximum(sd, 1e-12), size=(m, d))
        labels = rng.integers(0, graph.n_classes, size=m)
        for i in range(m):
            inter[i, rng.choice(n, size=min(budget, n), replace=False)] = 1.0
    elif kind in ("copy", "newcopy"):
        if kind == "copy":
            sources = rng.choice(labeled_idx, size=m, replace=False)
        else:
            to_unlabeled = np.array(
                [sum(graph.unlabeled_mask[v] for v in adj[u]) for u in labeled_idx]
            )
            order = np.argsort(-to_unlabeled, kind="stable")
            sources = labeled_idx[order[:m]]
        features = graph.features[sources].copy()
        labels = graph.labels[sources].copy()
        for i, u in enumerate(sources):
            neigh = np.array(adj[u], dtype=np.int64)
            if kind == "newcopy" and neigh.size > budget:
                unl = rng.permutation(neigh[graph.unlabeled_mask[neigh]])
                lab = rng.permutation(neigh[~graph.unlabeled_mask[neigh]])
                neigh = np.concatenate([unl, lab])[:budget]
            else:
                neigh = _capped_edges(rng, neigh, budget)
            inter[i, neigh] = 1.0
    elif kind == "testcopy":
        sources = rng.choice(unlabeled_idx, size=min(m, unlabeled_idx.size), replace=False)
        if sources.size < m:
            raise ValueError(f"testcopy needs {m} unlabeled sources, have {unlabeled_idx.size}")
        features = graph.features[sources].copy()
        labels = rng.integers(0, graph.n_classes, size=m)
        for i, u in enumerate(sources):
            inter[i, _capped_edges(rng, np.array(adj[u], dtype=np.int64), budget)] = 1.0
    else:  # testlink
        if unlabeled_idx.size < m:
            raise ValueError(f"testlink needs {m} unlabeled sources, have {unlabeled_idx.size}")
        sources = rng.choice(unlabeled_idx, size=m, replace=False)
        features = graph.features[sources].copy()
        labels = rng.integers(0, graph.n_classes, size=m)
        for i in range(m):
            take = min(budget, unlabeled_idx.size)
            inter[i, rng.choice(unlabeled_idx, size=take, replace=False)] = 1.0

    return InjectionPlan(
        features=features,
        inter=inter,
        intra=intra,
        labels=labels.astype(np.int64),
        budget=budget,
    )


# ----------------------------------------------------------------------
# attack loss (recorded, doubly differentiable)
# ----------------------------------------------------------------------


def attack_loss(
    rec: Record,
    wa_cont: Tensor,
    wx: Tensor,
    theta: list[Tensor],
    params: ModelParams,
    pseudo: np.ndarray,
    test_mask: np.ndarray,
    delta_v: np.ndarray,
    benign_v: np.ndarray,
    lam: float,
    gamma: float,
    eta_un: float,
    labels: np.ndarray,
    labeled_mask: np.ndarray,
    detach_inner: bool = False,
) -> tuple[Tensor, Tensor, Tensor | None]:
    """Damage CE after unlearning the injected nodes minus lam times the CE
    after unlearning a fixed benign set, via the one-step solver.

    Returns (loss, damage term, benign term or None when lam is 0).
    ``detach_inner`` blocks gradient flow through the inner parameter update
    (diagnostics only).
    """
    a_hat = normalize_adjacency(rec, wa_cont)
    logits = forward_logits(rec, a_hat, wx, theta, params)
    test_w = test_mask.astype(np.float64)

    def unlearned_ce(v_un: np.ndarray) -> Tensor:
        theta_un = one_step_from_logits(
            rec, logits, theta, labels, labeled_mask, v_un, gamma, eta_un
        )
        if detach_inner:
            theta_un = [rec.leaf(t.values) for t in theta_un]
        logits_un = forward_logits(rec, a_hat, wx, theta_un, params)
        return rec.masked_cross_entropy(logits_un, pseudo, test_w)

    damage = unlearned_ce(delta_v)
    if lam == 0:
        return damage, damage, None
    benign = unlearned_ce(benign_v)
    loss = rec.subtract(damage, rec.scalar_multiply(benign, lam))
    return loss, damage, benign


# ----------------------------------------------------------------------
# the optimizer
# ----------------------------------------------------------------------


def init_state(graph: Graph, plan: InjectionPlan, config: AttackConfig,
               candidates: CandidateSet | None) -> AttackState:
    """Lift a binary initialization plan into free-variable space.

    Off entries get a deterministic +-1e-6 logit jitter so that top-B fill-in
    for under-budget rows lands on random columns rather than always the
    lowest indices.
    """
    m, n = plan.m, graph.n
    rng = np.random.default_rng(np.random.SeedSequence([int(config.seed), 0x11F7]))
    inter_free = np.full((m, n), EDGE_OFF) + rng.uniform(-1e-6, 1e-6, (m, n))
    inter_free[plan.inter > 0.5] = EDGE_ON
    if candidates is not None:
        frozen_cols = ~candidates.column_mask
        inter_free[:, frozen_cols] = EDGE_FROZEN
    if config.fix_intra:
        intra_upper = None
    else:
        intra_upper = np.triu(np.full((m, m), EDGE_OFF) + rng.uniform(-1e-6, 1e-6, (m, m)), 1)
        intra_upper[np.triu(plan.intra, 1) > 0.5] = EDGE_ON
    return AttackState(
        x_inj=plan.features.copy(),
        inter_free=inter_free,
        intra_upper=intra_upper,
        labels=plan.labels.copy(),
    )


def continuous_blocks(state: AttackState, candidates: CandidateSet | None):
    """Numpy view of the current sigmoid-mapped edge blocks."""
    inter = _stable_sigmoid(state.inter_free)
    if candidates is not None:
        inter[:, ~candidates.column_mask] = 0.0
    m = state.x_inj.shape[0]
    if state.intra_upper is None:
        intra = np.zeros((m, m))
    else:
        intra = _stable_sigmoid(state.intra_upper + state.intra_upper.T)
        np.fill_diagonal(intra, 0.0)
    return inter, intra


def optim_attack(
    graph: Graph,
    surrogate_params: ModelParams,
    config: AttackConfig,
    init_plan: InjectionPlan,
    pseudo: np.ndarray,
    refresh_fn=None,
) -> AttackResult:
    """Gradient-ascent optimization of the injected blocks, then one hard
    projection onto the budget-feasible binary set.

    ``surrogate_params`` are held fixed over all steps unless
    ``config.refresh_every`` > 0, in which case ``refresh_fn(plan) ->
    (params, pseudo)`` re-trains on the currently projected plan.
    """
    m, n = init_plan.m, graph.n
    candidates = None
    if config.candidates is not None:
        cand_cfg = config.candidates
        candidates = khop_candidates(
            graph,
            np.flatnonzero(graph.unlabeled_mask),
            cand_cfg.k,
            cand_cfg.target_sample_fraction,
            cand_cfg.neighbors_per_target,
            seed=config.seed,
        )
        if candidates.nodes.size < config.budget:
            raise AttackError(
                f"candidate set of {candidates.nodes.size} nodes cannot host "
                f"budget {config.budget}"
            )

    state = init_state(graph, init_plan, config, candidates)
    a_dense = dense_adjacency(graph)
    feat_lo, feat_hi = float(graph.features.min()), float(graph.features.max())
    if config.clamp_features:
        state.x_inj = np.clip(state.x_inj, feat_lo, feat_hi)
    benign_v = sample_benign_set(
        np.flatnonzero(graph.labeled_mask),
        np.zeros(0, dtype=np.int64),
        config.benign_set_size if config.benign_set_size is not None else m,
        config.seed,
    )
    delta_v = np.arange(n, n + m)
    labels_full = np.concatenate([graph.labels, init_plan.labels])
    labeled_full = np.concatenate([graph.labeled_mask, np.ones(m, dtype=bool)])
    test_full = np.concatenate([graph.unlabeled_mask, np.zeros(m, dtype=bool)])
    pseudo_full = pseudo.copy()
    pseudo_full[graph.labeled_mask] = graph.labels[graph.labeled_mask]
    pseudo_full = np.concatenate([pseudo_full, init_plan.labels])
    params = surrogate_params

    # the record's structure is identical every step: build it once, then
    # refresh leaf values and recompute all buffers in place
    rec = None
    for step in range(config.steps):
        if config.refresh_every and step and step % config.refresh_every == 0:
            params, new_pseudo = refresh_fn(current_plan(graph, state, config, candidates))
            pseudo_full[:n][test_full[:n]] = new_pseudo[graph.unlabeled_mask]
            rec = None  # loss targets changed; rebuild
        try:
            if rec is None:
                rec = Record()
                x_t = rec.leaf(state.x_inj.copy())
                inter_t = rec.leaf(state.inter_free.copy())
                inter_c = rec.sigmoid(inter_t)
                if candidates is not None:
                    col_mask = np.repeat(
                        candidates.column_mask[None, :].astype(np.float64), m, axis=0
                    )
                    inter_c = rec.multiply(inter_c, rec.leaf(col_mask))
                wrt = [x_t, inter_t]
                if state.intra_upper is not None:
                    upper_t = rec.leaf(state.intra_upper.copy())
                    sym = rec.add(upper_t, rec.transpose(upper_t))
                    hollow = np.ones((m, m)) - np.eye(m)
                    intra_c = rec.multiply(rec.sigmoid(sym), rec.leaf(hollow))
                    wrt.append(upper_t)
                else:
                    intra_c = rec.leaf(np.zeros((m, m)))
                wa = rec.block_assemble(rec.leaf(a_dense), inter_c, intra_c)
                wx = rec.stack_rows(rec.leaf(graph.features), x_t)
                theta = [rec.leaf(w) for w in param_arrays(params)]
                eta_eff = config.eta_un * config.inner_horizon
                loss, damage_t, benign_t = attack_loss(
                    rec, wa, wx, theta, params, pseudo_full, test_full, delta_v, benign_v,
                    config.lam, config.gamma, eta_eff, labels_full, labeled_full,
                )
                grads = rec.gradient(loss, wrt)
            else:
                rec.set_leaf(x_t, state.x_inj)
                rec.set_leaf(inter_t, state.inter_free)
                if state.intra_upper is not None:
                    rec.set_leaf(upper_t, state.intra_upper)
                rec.recompute()
        except EngineError as exc:
            raise AttackError(f"attack step {step}: {exc}") from exc

        step_vals = [
            loss.item(),
            damage_t.item(),
            benign_t.item() if benign_t is not None else float("nan"),
        ]
        grad_vals = [g.values for g in grads]
        if not all(np.isfinite(v) for v in step_vals[:2]) or not all(
            np.isfinite(g).all() for g in grad_vals
        ):
            raise AttackError(f"attack step {step}: non-finite loss or gradient")
        state.trace.append(
            {"step": step, "loss": step_vals[0], "damage": step_vals[1], "benign": step_vals[2]}
        )

        state.x_inj = state.x_inj + config.eta_x * grad_vals[0]
        if config.clamp_features:
            np.clip(state.x_inj, feat_lo, feat_hi, out=state.x_inj)
        g_inter = grad_vals[1]
        if candidates is not None:
            g_inter = g_inter * candidates.column_mask[None, :]
        state.inter_free = state.inter_free + config.eta_a * g_inter
        if state.intra_upper is not None:
            state.intra_upper = state.intra_upper + config.eta_a * np.triu(grad_vals[2], 1)

    plan = current_plan(graph, state, config, candidates)
    return AttackResult(plan=plan, state=state, pseudo=pseudo_full[:n], benign_set=benign_v)


def current_plan(
    graph: Graph, state: AttackState, config: AttackConfig, candidates: CandidateSet | None
) -> InjectionPlan:
    """Project the current continuous state onto a binary, budget-feasible plan."""
    inter_c, intra_c = continuous_blocks(state, candidates)
    inter_b, intra_b = project_topb(inter_c, intra_c, config.budget)
    return InjectionPlan(
        features=state.x_inj.copy(),
        inter=inter_b,
        intra=intra_b,
        labels=state.labels.copy(),
        budget=config.budget,
    )
