"""End-to-end experiment orchestration: single experiments, budget/ratio
sweeps, cross-architecture transfer, and CSV/JSON report emission.

All randomness flows from three named seeds -- split, attack, victim -- so an
ablation varies exactly one axis.  Reports serialize deterministically;
wall-clock timings are kept in memory and only written when explicitly
requested.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .attack import (
    BASELINE_KINDS,
    AttackConfig,
    baseline_inject,
    optim_attack,
    sample_benign_set,
)
from .graphs import Graph, InjectionPlan, assemble_injected, empty_plan, load_dataset, normalize_adjacency_dense, with_split
from .models import ModelParams, TrainConfig, evaluate, pseudo_labels, train
from .unlearn import UnlearnRequest, ga_unlearn

ATTACK_KINDS = ("noattack", "optim") + BASELINE_KINDS

#: Column order of CSV reports.
CSV_COLUMNS = (
    "dataset",
    "attack",
    "victim_arch",
    "budget",
    "inject_fraction",
    "lam",
    "seed_split",
    "seed_attack",
    "seed_victim",
    "original_accuracy",
    "unlearned_accuracy",
    "delta_acc",
    "original_f1",
    "unlearned_f1",
    "benign_f1",
    "diverged",
    "error",
)


class StageError(RuntimeError):
    """An experiment stage failed; the message carries the stage name."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class ExperimentConfig:
    dataset: str = ""  # canonical dataset directory
    attack: str = "optim"
    victim_arch: str = "gcn"
    split_fraction: float = 0.9
    seed_split: int = 0
    seed_attack: int = 0
    seed_victim: int = 0
    attack_config: AttackConfig = field(default_factory=AttackConfig)
    victim_train: TrainConfig = field(default_factory=TrainConfig)
    unlearn_steps: int = 25
    unlearn_lr: float = 0.1
    unlearn_gamma: float = 1.0
    unlearn_method: str = "ga_multi"
    benign_fraction: float = 0.05  # benign-check set size for noattack runs

    def __post_init__(self):
        if self.attack not in ATTACK_KINDS:
            raise ValueError(f"attack must be one of {ATTACK_KINDS}")
        if self.victim_arch not in ("gcn", "sgc"):
            raise ValueError("victim_arch must be 'gcn' or 'sgc'")
        if self.unlearn_method in ("gif", "ceu", "idea", "gnndelete", "graph-eraser"):
            raise ValueError(
                f"unlearning method '{self.unlearn_method}' is out of scope here; "
                "only gradient-ascent unlearning (ga_multi) is reproduced"
            )
        if self.unlearn_method not in ("ga_multi", "ga"):
            raise ValueError("unlearn_method must be 'ga_multi' (alias 'ga')")


@dataclass
class ExperimentReport:
    dataset: str
    attack: str
    victim_arch: str
    budget: int
    inject_fraction: float
    lam: float
    seed_split: int
    seed_attack: int
    seed_victim: int
    original_accuracy: float
    unlearned_accuracy: float
    delta_acc: float
    original_f1: float
    unlearned_f1: float
    benign_f1: float
    diverged: bool
    timings: dict = field(default_factory=dict)
    error: str = ""

    def to_json_dict(self, include_timings: bool = False) -> dict:
        obj = asdict(self)
        if not include_timings:
            obj.pop("timings")
        return obj


def _run_stage(stage: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except Exception as exc:  # noqa: BLE001 - stage tag then re-raise
        raise StageError(stage, exc) from exc


def load_split_graph(cfg: ExperimentConfig) -> Graph:
    graph = _run_stage("load", load_dataset, cfg.dataset)
    return with_split(graph, cfg.split_fraction, cfg.seed_split)


def build_plan(graph: Graph, cfg: ExperimentConfig):
    """Injection plan for the configured attack; for optimized attacks the
    second element is the full AttackResult (loss trace and final state)."""
    ac = cfg.attack_config
    if cfg.attack == "noattack":
        return empty_plan(graph, ac.budget), None
    m = ac.n_injected(graph.n)
    if cfg.attack in BASELINE_KINDS:
        return baseline_inject(graph, cfg.attack, m, ac.budget, cfg.seed_attack), None

    init_plan = _run_stage(
        "attack-init", baseline_inject, graph, ac.init_strategy, m, ac.budget, cfg.seed_attack + 1
    )
    wa, wx, labels, labeled = assemble_injected(graph, init_plan)
    a_hat = normalize_adjacency_dense(wa)
    surrogate_cfg = replace(cfg.victim_train, seed=cfg.seed_attack + 2)
    surrogate = _run_stage(
        "surrogate-train", train, a_hat, wx, labels, labeled, graph.n_classes, surrogate_cfg
    )
    pseudo = pseudo_labels(surrogate, a_hat, wx)[: graph.n]
    ac = replace(ac, seed=cfg.seed_attack)
    result = _run_stage("attack-optimize", optim_attack, graph, surrogate, ac, init_plan, pseudo)
    return result.plan, result


def _victim_pipeline(graph: Graph, plan: InjectionPlan, cfg: ExperimentConfig) -> ExperimentReport:
    timings: dict[str, float] = {}
    t0 = time.perf_counter()
    wa, wx, labels, labeled = assemble_injected(graph, plan)
    a_hat = normalize_adjacency_dense(wa)
    test_mask = np.concatenate([graph.unlabeled_mask, np.zeros(plan.m, dtype=bool)])
    victim_cfg = replace(cfg.victim_train, seed=cfg.seed_victim, k_prop=cfg.victim_train.k_prop)
    victim = _run_stage(
        "victim-train", train, a_hat, wx, labels, labeled, graph.n_classes, victim_cfg,
        cfg.victim_arch,
    )
    timings["train"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    original = evaluate(victim, a_hat, wx, labels, test_mask)

    if plan.m:
        delta_v = np.arange(graph.n, graph.n + plan.m)
    else:
        labeled_idx = np.flatnonzero(graph.labeled_mask)
        size = max(1, int(round(cfg.benign_fraction * labeled_idx.size)))
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed_attack, 0xD0_0D]))
        delta_v = np.sort(rng.choice(labeled_idx, size=size, replace=False))
    request = UnlearnRequest(
        delta_v, method="ga_multi", gamma=cfg.unlearn_gamma, eta=cfg.unlearn_lr,
        steps=cfg.unlearn_steps,
    )
    unlearned_params, diverged = _run_stage(
        "unlearn", ga_unlearn, wa, wx, victim, request, labels, labeled
    )
    unlearned = evaluate(unlearned_params, a_hat, wx, labels, test_mask)
    timings["unlearn"] = time.perf_counter() - t0

    # benign check: unlearn a disjoint benign set from the trained victim
    t0 = time.perf_counter()
    labeled_idx = np.flatnonzero(graph.labeled_mask)
    benign_size = plan.m if plan.m else delta_v.size
    benign_size = min(benign_size, max(0, labeled_idx.size - delta_v.size - 1))
    exclude = delta_v if plan.m == 0 else np.zeros(0, dtype=np.int64)
    benign_v = sample_benign_set(labeled_idx, exclude, benign_size, cfg.seed_victim + 17)
    benign_request = replace(request, nodes=benign_v)
    benign_params, benign_div = _run_stage(
        "benign-unlearn", ga_unlearn, wa, wx, victim, benign_request, labels, labeled
    )
    benign = evaluate(benign_params, a_hat, wx, labels, test_mask)
    timings["benign"] = time.perf_counter() - t0

    ac = cfg.attack_config
    return ExperimentReport(
        dataset=graph.name,
        attack=cfg.attack,
        victim_arch=cfg.victim_arch,
        budget=ac.budget,
        inject_fraction=ac.inject_fraction,
        lam=ac.lam,
        seed_split=cfg.seed_split,
        seed_attack=cfg.seed_attack,
        seed_victim=cfg.seed_victim,
        original_accuracy=original["accuracy"],
        unlearned_accuracy=unlearned["accuracy"],
        delta_acc=original["accuracy"] - unlearned["accuracy"],
        original_f1=original["macro_f1"],
        unlearned_f1=unlearned["macro_f1"],
        benign_f1=benign["macro_f1"],
        diverged=bool(diverged or benign_div),
        timings=timings,
    )


def run_experiment(cfg: ExperimentConfig, graph: Graph | None = None,
                   plan: InjectionPlan | None = None) -> ExperimentReport:
    """Full pipeline: plan -> train victim -> unlearn injected set -> benign
    check.  A pre-built graph or plan short-circuits those stages (used by
    sweeps and transfer runs)."""
    if graph is None:
        graph = load_split_graph(cfg)
    if plan is None:
        t0 = time.perf_counter()
        plan, _ = build_plan(graph, cfg)
        plan_time = time.perf_counter() - t0
    else:
        plan_time = 0.0
    report = _victim_pipeline(graph, plan, cfg)
    report.timings["plan"] = plan_time
    return report


def run_trials(cfg: ExperimentConfig, trials: int) -> list[ExperimentReport]:
    """Repeat an experiment over distinct attack/victim seeds, fixed split."""
    reports = []
    for t in range(trials):
        trial_cfg = replace(
            cfg, seed_attack=cfg.seed_attack + t, seed_victim=cfg.seed_victim + t
        )
        reports.append(run_experiment(trial_cfg))
    return reports


def run_sweep(
    cfg: ExperimentConfig,
    budgets=(1, 5, 10, 15, 20),
    ratios=(0.01, 0.03, 0.05, 0.07, 0.09),
    trials: int = 1,
) -> list[dict]:
    """One row per (budget, ratio, trial); failures are recorded in-row."""
    budgets = list(budgets)
    ratios = list(ratios)
    if not budgets or not ratios:
        raise ValueError("sweep grids must be non-empty")
    graph = load_split_graph(cfg)
    rows = []
    for budget in budgets:
        for ratio in ratios:
            for t in range(trials):
                cell = replace(
                    cfg,
                    seed_attack=cfg.seed_attack + t,
                    seed_victim=cfg.seed_victim + t,
                    attack_config=replace(cfg.attack_config, budget=budget, inject_fraction=ratio),
                )
                try:
                    rows.append(run_experiment(cell, graph=graph).to_json_dict())
                except Exception as exc:  # noqa: BLE001 - record and continue
                    failed = ExperimentReport(
                        dataset=graph.name, attack=cell.attack, victim_arch=cell.victim_arch,
                        budget=budget, inject_fraction=ratio, lam=cell.attack_config.lam,
                        seed_split=cell.seed_split, seed_attack=cell.seed_attack,
                        seed_victim=cell.seed_victim,
                        original_accuracy=float("nan"), unlearned_accuracy=float("nan"),
                        delta_acc=float("nan"), original_f1=float("nan"),
                        unlearned_f1=float("nan"), benign_f1=float("nan"),
                        diverged=False, error=str(exc),
                    )
                    rows.append(failed.to_json_dict())
    return rows


def run_transfer(cfg: ExperimentConfig, victims=("gcn", "sgc")) -> dict:
    """Evaluate one injection plan (built once) against each victim arch."""
    graph = load_split_graph(cfg)
    plan, _ = build_plan(graph, cfg)
    matrix = {}
    for arch in victims:
        victim_cfg = replace(cfg, victim_arch=arch)
        try:
            matrix[arch] = run_experiment(victim_cfg, graph=graph, plan=plan).to_json_dict()
        except Exception as exc:  # noqa: BLE001 - record and continue
            matrix[arch] = {"error": str(exc)}
    return matrix


# ----------------------------------------------------------------------
# report emission
# ----------------------------------------------------------------------


def _fmt_cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def emit_report(report_or_rows, fmt: str, path, include_timings: bool = False) -> Path:
    """Write a single report as JSON or a row list as CSV (6-decimal floats,
    LF newlines).  Timings are excluded unless requested so identical configs
    produce byte-identical files."""
    path = Path(path)
    if fmt == "json":
        if isinstance(report_or_rows, ExperimentReport):
            obj = report_or_rows.to_json_dict(include_timings=include_timings)
        else:
            obj = report_or_rows
        path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path
    if fmt == "csv":
        rows = report_or_rows
        if isinstance(rows, ExperimentReport):
            rows = [rows.to_json_dict()]
        rows = [r.to_json_dict() if isinstance(r, ExperimentReport) else r for r in rows]
        lines = [",".join(CSV_COLUMNS)]
        for row in rows:
            lines.append(",".join(_fmt_cell(row.get(col, "")) for col in CSV_COLUMNS))
        path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
        return path
    raise ValueError(f"unknown report format '{fmt}'")


def load_report(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))
