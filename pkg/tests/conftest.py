"""Shared fixtures: the checked-in triangle dataset, generated synthetic
benchmark directories, and memoized heavy artifacts (trained models, attack
plans) reused across test modules."""

from pathlib import Path

import numpy as np
import pytest

from unlearn_attack import synth
from unlearn_attack.graphs import (
    dense_adjacency,
    load_dataset,
    normalize_adjacency_dense,
    with_split,
)

FIXTURES = Path(__file__).parent / "fixtures"

#: one "PASS"/"FAIL" line per acceptance criterion, echoed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


@pytest.fixture(scope="session")
def triangle_dir():
    return FIXTURES / "triangle"


@pytest.fixture(scope="session")
def cora_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("datasets") / "cora"
    synth.write_dataset(out, synth.CORA_LIKE, seed=7)
    return out


@pytest.fixture(scope="session")
def citeseer_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("datasets_cs") / "citeseer"
    synth.write_dataset(out, synth.CITESEER_LIKE, seed=7)
    return out


@pytest.fixture(scope="session")
def tiny_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("datasets_tiny") / "tiny"
    synth.write_dataset(out, synth.TINY, seed=7)
    return out


@pytest.fixture(scope="session")
def cora_graph(cora_dir):
    return with_split(load_dataset(cora_dir), 0.9, seed=1)


@pytest.fixture(scope="session")
def citeseer_graph(citeseer_dir):
    return with_split(load_dataset(citeseer_dir), 0.9, seed=1)


@pytest.fixture(scope="session")
def tiny_graph(tiny_dir):
    return with_split(load_dataset(tiny_dir), 0.9, seed=1)


@pytest.fixture(scope="session")
def cora_ahat(cora_graph):
    return normalize_adjacency_dense(dense_adjacency(cora_graph))


def _rng(seed):
    return np.random.default_rng(seed)
