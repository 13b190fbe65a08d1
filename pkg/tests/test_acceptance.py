"""Acceptance suite: one test per release criterion, each printing a
pass/fail line (echoed in the terminal summary).

Expensive artifacts (trained victims, optimized plans) are computed once per
session and shared across criteria through the `lab` fixture.
"""

import dataclasses
import time
from itertools import combinations

import numpy as np
import pytest

from unlearn_attack.attack import (
    AttackConfig,
    CandidateConfig,
    attack_loss,
    top_b_row,
)
from unlearn_attack.engine import Record
from unlearn_attack.graphs import dense_adjacency, khop_candidates, load_dataset, with_split
from unlearn_attack.harness import ExperimentConfig, build_plan, emit_report, run_experiment
from unlearn_attack.models import GCNParams, init_params, param_arrays
from unlearn_attack.unlearn import UnlearnRequest, ga_unlearn, one_step_unlearn

pytestmark = pytest.mark.slow

SEEDS = (0, 1, 2)


class Lab:
    """Memoized experiment runner shared by the acceptance criteria."""

    def __init__(self, dataset_dirs):
        self.dataset_dirs = dataset_dirs
        self.graphs = {}
        self.runs = {}

    def graph(self, name):
        if name not in self.graphs:
            self.graphs[name] = with_split(load_dataset(self.dataset_dirs[name]), 0.9, seed=1)
        return self.graphs[name]

    def config(self, name, attack, seed, **attack_overrides):
        attack_config = AttackConfig(seed=seed, **attack_overrides)
        return ExperimentConfig(
            dataset=str(self.dataset_dirs[name]),
            attack=attack,
            seed_split=1,
            seed_attack=seed,
            seed_victim=seed,
            attack_config=attack_config,
        )

    def run(self, name, attack, seed, victim_arch="gcn", **attack_overrides):
        """Returns (plan, report); memoized on all arguments."""
        key = (name, attack, seed, victim_arch, tuple(sorted(attack_overrides.items())))
        if key not in self.runs:
            cfg = self.config(name, attack, seed, **attack_overrides)
            cfg = dataclasses.replace(cfg, victim_arch=victim_arch)
            graph = self.graph(name)
            plan, _ = build_plan(graph, cfg)
            report = run_experiment(cfg, graph=graph, plan=plan)
            self.runs[key] = (plan, report)
        return self.runs[key]

    def report_with_plan(self, name, plan, seed, victim_arch="gcn"):
        cfg = self.config(name, "optim", seed)
        cfg = dataclasses.replace(cfg, victim_arch=victim_arch)
        return run_experiment(cfg, graph=self.graph(name), plan=plan)


@pytest.fixture(scope="session")
def lab(cora_dir, citeseer_dir, tiny_dir):
    return Lab({"cora": cora_dir, "citeseer": citeseer_dir, "tiny": tiny_dir})


def record(log, number, name, passed, detail):
    line = f"criterion {number:>2} [{'PASS' if passed else 'FAIL'}] {name}: {detail}"
    log.append(line)
    print(line)
    assert passed, line


# ----------------------------------------------------------------------


def test_criterion_01_projection_oracle(acceptance_log):
    """Greedy top-B equals the exhaustive inner-product maximizer."""
    rng = np.random.default_rng(20240101)
    t0 = time.perf_counter()
    exact = 0
    for _ in range(200):
        length = int(rng.integers(2, 13))
        budget = int(rng.integers(1, min(4, length) + 1))
        row = rng.uniform(0, 1, length)
        greedy = top_b_row(row, budget)
        best = max(sum(row[list(p)]) for p in combinations(range(length), budget))
        exact += int(greedy.sum() == budget and abs(row @ greedy - best) < 1e-12)
    elapsed = time.perf_counter() - t0
    ok = exact == 200 and elapsed < 1.0
    record(acceptance_log, 1, "projection oracle equivalence", ok,
           f"{exact}/200 exact in {elapsed:.3f}s")


def test_criterion_02_double_backward(acceptance_log):
    """Attack-loss gradients match central finite differences (8 nodes, m=2,
    d=4, relative error <= 1e-4)."""
    rng = np.random.default_rng(11)
    n, m, d, c = 8, 2, 4, 2
    t0 = time.perf_counter()
    a = (rng.uniform(0, 1, (n, n)) < 0.35).astype(float)
    a = np.triu(a, 1)
    a = a + a.T
    x_top = rng.standard_normal((n, d))
    params = GCNParams(w1=rng.standard_normal((d, 3)) * 0.5,
                       w2=rng.standard_normal((3, c)) * 0.5)
    labels = rng.integers(0, c, n + m)
    labeled = np.ones(n + m, dtype=bool)
    labeled[5:n] = False
    test = ~labeled
    pseudo = labels.copy()
    delta_v = np.arange(n, n + m)
    benign_v = np.array([0, 1])
    x0 = rng.standard_normal((m, d))
    i0 = rng.standard_normal((m, n))

    def build(x_inj, inter_free, want_grads):
        rec = Record()
        xt, it = rec.leaf(x_inj), rec.leaf(inter_free)
        wa = rec.block_assemble(rec.leaf(a), rec.sigmoid(it), rec.leaf(np.zeros((m, m))))
        wx = rec.stack_rows(rec.leaf(x_top), xt)
        theta = [rec.leaf(w) for w in param_arrays(params)]
        loss, _, _ = attack_loss(rec, wa, wx, theta, params, pseudo, test, delta_v,
                                 benign_v, 1.0, 1.0, 0.5, labels, labeled)
        if not want_grads:
            return loss.item()
        return rec.gradient(loss, [xt, it])

    gx, gi = build(x0, i0, True)
    eps = 1e-5
    worst = 0.0
    for base, analytic, which in ((x0, gx.values, "x"), (i0, gi.values, "i")):
        fd = np.zeros_like(base)
        for idx in np.ndindex(base.shape):
            hi = base.copy()
            hi[idx] += eps
            lo = base.copy()
            lo[idx] -= eps
            if which == "x":
                fd[idx] = (build(hi, i0, False) - build(lo, i0, False)) / (2 * eps)
            else:
                fd[idx] = (build(x0, hi, False) - build(x0, lo, False)) / (2 * eps)
        worst = max(worst, np.abs(analytic - fd).max() / max(np.abs(fd).max(), 1e-12))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-4 and elapsed < 10.0
    record(acceptance_log, 2, "double-backward vs finite differences", ok,
           f"max rel err {worst:.2e} in {elapsed:.1f}s")


def test_criterion_03_one_step_identities(acceptance_log):
    rng = np.random.default_rng(5)
    n, d, c = 9, 4, 3
    a = rng.uniform(0, 1, (n, n))
    a = (a + a.T) / 2
    np.fill_diagonal(a, 0)
    x = rng.standard_normal((n, d))
    labels = rng.integers(0, c, n)
    labeled = np.ones(n, dtype=bool)
    params = init_params("gcn", d, c, seed=2, hidden=4)
    v_un = np.array([0, 3])

    rec = Record()
    theta = [rec.leaf(w) for w in param_arrays(params)]
    zero_rate = one_step_unlearn(
        rec, rec.leaf(a), rec.leaf(x), theta, params,
        UnlearnRequest(v_un, method="one_step", eta=0.0, steps=1), labels, labeled,
    )
    identity_ok = all(
        np.array_equal(t.values, w) for t, w in zip(zero_rate, param_arrays(params))
    )

    req = UnlearnRequest(v_un, eta=0.1, steps=1)
    ga_params, _ = ga_unlearn(a, x, params, req, labels, labeled)
    rec2 = Record()
    theta2 = [rec2.leaf(w) for w in param_arrays(params)]
    one = one_step_unlearn(rec2, rec2.leaf(a), rec2.leaf(x), theta2, params, req,
                           labels, labeled)
    equal_ok = all(
        np.array_equal(g, t.values) for g, t in zip(param_arrays(ga_params), one)
    )
    ok = identity_ok and equal_ok
    record(acceptance_log, 3, "one-step identities (bitwise)", ok,
           f"zero-rate identity {identity_ok}, ga(1) == one_step {equal_ok}")


def test_criterion_04_noattack_sanity(acceptance_log, lab):
    reports = [lab.run("cora", "noattack", s)[1] for s in SEEDS]
    mean_delta = float(np.mean([r.delta_acc for r in reports]))
    mean_orig = float(np.mean([r.original_accuracy for r in reports]))
    ok = abs(mean_delta) <= 0.10 and mean_orig >= 0.75
    record(acceptance_log, 4, "benign unlearning sanity", ok,
           f"mean dAcc {mean_delta:+.4f} (<=0.10), mean original {mean_orig:.4f} (>=0.75)")


def test_criterion_05_attack_effectiveness_cora(acceptance_log, lab):
    reports = [lab.run("cora", "optim", s)[1] for s in SEEDS]
    mean_delta = float(np.mean([r.delta_acc for r in reports]))
    mean_orig = float(np.mean([r.original_accuracy for r in reports]))
    ok = mean_delta >= 0.15 and mean_orig >= 0.75
    record(acceptance_log, 5, "attack effectiveness on cora fixture", ok,
           f"mean dAcc {mean_delta:+.4f} (>=0.15), mean original {mean_orig:.4f} (>=0.75)")


def test_criterion_06_attack_effectiveness_citeseer(acceptance_log, lab):
    reports = [lab.run("citeseer", "optim", s)[1] for s in SEEDS]
    mean_delta = float(np.mean([r.delta_acc for r in reports]))
    mean_orig = float(np.mean([r.original_accuracy for r in reports]))
    ok = mean_delta >= 0.15 and mean_orig >= 0.65
    record(acceptance_log, 6, "attack effectiveness on citeseer fixture", ok,
           f"mean dAcc {mean_delta:+.4f} (>=0.15), mean original {mean_orig:.4f} (>=0.65)")


def test_criterion_07_attack_beats_baselines(acceptance_log, lab):
    optim = float(np.mean([lab.run("cora", "optim", s)[1].delta_acc for s in SEEDS]))
    rows = []
    ok = True
    for kind in ("random", "copy", "newcopy", "testcopy", "testlink"):
        mean_b = float(np.mean([lab.run("cora", kind, s)[1].delta_acc for s in SEEDS]))
        rows.append(f"{kind} {mean_b:+.4f}")
        ok = ok and optim > mean_b
    record(acceptance_log, 7, "optimized attack beats every baseline", ok,
           f"optim {optim:+.4f} vs " + ", ".join(rows))


def test_criterion_08_stealthiness_regularizer(acceptance_log, lab):
    with_reg = [lab.run("cora", "optim", s)[1] for s in SEEDS]
    without = [lab.run("cora", "optim", s, lam=0.0)[1] for s in SEEDS]
    benign_gap = float(
        np.mean([r.benign_f1 for r in with_reg]) - np.mean([r.benign_f1 for r in without])
    )
    unlearned_gap = float(
        abs(np.mean([r.unlearned_f1 for r in with_reg]) - np.mean([r.unlearned_f1 for r in without]))
    )
    ok = benign_gap >= 0.01 and unlearned_gap <= 0.10
    record(acceptance_log, 8, "stealthiness regularizer helps benign F1", ok,
           f"benign F1 gap {benign_gap:+.4f} (>=0.01), unlearned F1 gap {unlearned_gap:.4f} (<=0.10)")


def test_criterion_09_budget_plateau(acceptance_log, lab):
    d5 = lab.run("cora", "optim", 0)[1].delta_acc
    d1 = lab.run("cora", "optim", 0, budget=1)[1].delta_acc
    d20 = lab.run("cora", "optim", 0, budget=20)[1].delta_acc
    ok = d5 >= d20 - 0.08 and d5 >= d1 - 0.05
    record(acceptance_log, 9, "edge-budget plateau", ok,
           f"dAcc B=1 {d1:+.4f}, B=5 {d5:+.4f}, B=20 {d20:+.4f}")


def test_criterion_10_candidate_restriction(acceptance_log, lab):
    cand_cfg = {"candidates": CandidateConfig(k=1, target_sample_fraction=0.1,
                                              neighbors_per_target=3),
                "fix_intra": True}
    plan, report = lab.run("cora", "optim", 0, **cand_cfg)
    graph = lab.graph("cora")
    cand = khop_candidates(
        graph, np.flatnonzero(graph.unlabeled_mask), 1, 0.1, 3, seed=0
    )
    used_cols = np.flatnonzero(plan.inter.sum(axis=0) > 0)
    inside = set(used_cols) <= set(cand.nodes)
    intra_zero = bool(np.all(plan.intra == 0))
    unrestricted = lab.run("cora", "optim", 0)[1].delta_acc
    strong_enough = report.delta_acc >= 0.5 * unrestricted
    ok = inside and intra_zero and strong_enough
    record(acceptance_log, 10, "candidate-restriction soundness", ok,
           f"edges in candidate set {inside}, intra zero {intra_zero}, "
           f"dAcc {report.delta_acc:+.4f} vs unrestricted {unrestricted:+.4f}")


def test_criterion_11_transfer_to_sgc(acceptance_log, lab):
    plan, _ = lab.run("cora", "optim", 0)
    report = lab.report_with_plan("cora", plan, 0, victim_arch="sgc")
    ok = report.delta_acc >= 0.10
    record(acceptance_log, 11, "plan transfers to SGC victim", ok,
           f"dAcc {report.delta_acc:+.4f} (>=0.10), original {report.original_accuracy:.4f}")


def test_criterion_12_determinism(acceptance_log, lab, tmp_path):
    cfg = lab.config("tiny", "optim", 3, steps=10, budget=3)
    cfg.victim_train.epochs = 80
    r1 = run_experiment(cfg)
    r2 = run_experiment(cfg)
    b1 = emit_report(r1, "json", tmp_path / "r1.json").read_bytes()
    b2 = emit_report(r2, "json", tmp_path / "r2.json").read_bytes()
    ok = b1 == b2
    record(acceptance_log, 12, "byte-identical reports for identical configs", ok,
           f"{len(b1)} bytes, equal {ok}")
