"""Command-line interface.

Subcommands:

* ``attack``       -- run one experiment (or several trials) and emit a report
* ``sweep``        -- grid over edge budgets and injection ratios, CSV out
* ``transfer``     -- evaluate one plan against several victim architectures
* ``ingest-check`` -- validate a canonical dataset directory

Exit code 0 on success; failures print a stage-tagged message to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .attack import AttackConfig, CandidateConfig
from .graphs import DatasetError, load_dataset
from .harness import (
    ATTACK_KINDS,
    ExperimentConfig,
    StageError,
    emit_report,
    run_sweep,
    run_transfer,
    run_trials,
)
from .models import TrainConfig


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dataset", required=True, help="canonical dataset directory")
    p.add_argument("--attack", choices=ATTACK_KINDS, default="optim")
    p.add_argument("--victim", choices=("gcn", "sgc"), default="gcn")
    p.add_argument("--unlearn-steps", type=int, default=25)
    p.add_argument("--unlearn-method", default="ga_multi",
                   help="victim-side unlearning operator (only ga_multi is in scope)")
    p.add_argument("--unlearn-lr", type=float, default=0.1)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--budget", type=int, default=5)
    p.add_argument("--inject-frac", type=float, default=0.05)
    p.add_argument("--steps-T", type=int, default=200, dest="steps_t")
    p.add_argument("--eta-a", type=float, default=0.5)
    p.add_argument("--eta-x", type=float, default=0.0005)
    p.add_argument("--lambda", type=float, default=1.0, dest="lam")
    p.add_argument("--init", choices=("random", "copy", "newcopy", "testcopy", "testlink"),
                   default="random", help="attack initialization strategy")
    p.add_argument("--fix-intra", action="store_true",
                   help="freeze injected-to-injected edges at zero")
    p.add_argument("--candidate-khop", type=int, default=None,
                   help="restrict inter-edges to the k-hop neighborhood of test nodes")
    p.add_argument("--candidate-frac", type=float, default=0.1)
    p.add_argument("--candidate-per-target", type=int, default=3)
    p.add_argument("--seed-split", type=int, default=0)
    p.add_argument("--seed-attack", type=int, default=0)
    p.add_argument("--seed-victim", type=int, default=0)
    p.add_argument("--train-lr", type=float, default=0.5)
    p.add_argument("--train-epochs", type=int, default=200)
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--out", default="-", help="output path ('-' for stdout)")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--timings", action="store_true", help="include wall times in JSON output")


def _experiment_config(args) -> ExperimentConfig:
    candidates = None
    if args.candidate_khop is not None:
        candidates = CandidateConfig(
            k=args.candidate_khop,
            target_sample_fraction=args.candidate_frac,
            neighbors_per_target=args.candidate_per_target,
        )
    attack_config = AttackConfig(
        steps=args.steps_t,
        eta_x=args.eta_x,
        eta_a=args.eta_a,
        lam=args.lam,
        budget=args.budget,
        inject_fraction=args.inject_frac,
        init_strategy=args.init,
        candidates=candidates,
        fix_intra=args.fix_intra,
        gamma=args.gamma,
        eta_un=args.unlearn_lr,
        seed=args.seed_attack,
    )
    victim_train = TrainConfig(lr=args.train_lr, epochs=args.train_epochs)
    return ExperimentConfig(
        dataset=args.dataset,
        attack=args.attack,
        victim_arch=args.victim,
        seed_split=args.seed_split,
        seed_attack=args.seed_attack,
        seed_victim=args.seed_victim,
        attack_config=attack_config,
        victim_train=victim_train,
        unlearn_steps=args.unlearn_steps,
        unlearn_lr=args.unlearn_lr,
        unlearn_gamma=args.gamma,
        unlearn_method=args.unlearn_method,
    )


def _emit(payload, args) -> None:
    if args.out == "-":
        if args.format == "json":
            print(json.dumps(payload, indent=2, sort_keys=True))
        else:
            emit_report(payload, "csv", "/dev/stdout")
    else:
        emit_report(payload, args.format, args.out, include_timings=args.timings)
        print(f"wrote {args.out}")


def _cmd_attack(args) -> int:
    cfg = _experiment_config(args)
    reports = run_trials(cfg, args.trials)
    if args.format == "csv" or args.trials > 1:
        _emit([r.to_json_dict(include_timings=args.timings) for r in reports], args)
    else:
        _emit(reports[0].to_json_dict(include_timings=args.timings), args)
    mean_delta = float(np.mean([r.delta_acc for r in reports]))
    print(f"mean delta_acc over {len(reports)} trial(s): {mean_delta:.4f}", file=sys.stderr)
    return 0


def _cmd_sweep(args) -> int:
    cfg = _experiment_config(args)
    budgets = [int(v) for v in args.budgets.split(",")]
    ratios = [float(v) for v in args.ratios.split(",")]
    rows = run_sweep(cfg, budgets, ratios, trials=args.trials)
    _emit(rows, args)
    return 0


def _cmd_transfer(args) -> int:
    cfg = _experiment_config(args)
    victims = args.victims.split(",")
    matrix = run_transfer(cfg, victims)
    if args.out == "-":
        print(json.dumps(matrix, indent=2, sort_keys=True))
    else:
        emit_report(matrix, "json", args.out)
        print(f"wrote {args.out}")
    return 0


def _cmd_ingest_check(args) -> int:
    graph = load_dataset(args.dataset)
    degrees = graph.degrees()
    print(
        f"ok: n={graph.n} d={graph.d} c={graph.n_classes} "
        f"edges={len(graph.edges)} isolated={int((degrees == 0).sum())} name={graph.name}"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="unlearn-attack",
        description="Node-injection attacks that corrupt GNNs through unlearning",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_attack = sub.add_parser("attack", help="run a single experiment")
    _add_common(p_attack)
    p_attack.set_defaults(fn=_cmd_attack)

    p_sweep = sub.add_parser("sweep", help="budget x ratio grid")
    _add_common(p_sweep)
    p_sweep.add_argument("--budgets", default="1,5,10,15,20")
    p_sweep.add_argument("--ratios", default="0.01,0.03,0.05,0.07,0.09")
    p_sweep.set_defaults(fn=_cmd_sweep)

    p_transfer = sub.add_parser("transfer", help="one plan, several victims")
    _add_common(p_transfer)
    p_transfer.add_argument("--victims", default="gcn,sgc")
    p_transfer.set_defaults(fn=_cmd_transfer)

    p_check = sub.add_parser("ingest-check", help="validate a dataset directory")
    p_check.add_argument("--dataset", required=True)
    p_check.set_defaults(fn=_cmd_ingest_check)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except StageError as exc:
        print(f"error {exc}", file=sys.stderr)
        return 2
    except (DatasetError, ValueError) as exc:
        print(f"error [config] {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
