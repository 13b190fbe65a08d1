"""Node-injection attacks that corrupt graph neural networks through the
unlearning requests that later remove the injected nodes."""

from .attack import AttackConfig, CandidateConfig, baseline_inject, optim_attack
from .engine import Record, Tensor
from .graphs import Graph, InjectionPlan, load_dataset, split_nodes
from .harness import ExperimentConfig, ExperimentReport, run_experiment
from .models import GCNParams, SGCParams, TrainConfig
from .unlearn import UnlearnRequest, ga_unlearn, one_step_unlearn, retrain_unlearn

__all__ = [
    "AttackConfig",
    "CandidateConfig",
    "ExperimentConfig",
    "ExperimentReport",
    "GCNParams",
    "Graph",
    "InjectionPlan",
    "Record",
    "SGCParams",
    "Tensor",
    "TrainConfig",
    "UnlearnRequest",
    "baseline_inject",
    "ga_unlearn",
    "load_dataset",
    "one_step_unlearn",
    "optim_attack",
    "retrain_unlearn",
    "run_experiment",
    "split_nodes",
]
