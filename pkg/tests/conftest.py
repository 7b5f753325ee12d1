import time
from pathlib import Path

import numpy as np
import pytest

from hemap.graph import load_graph, undirected_graph
from hemap.world import default_scenario_path, load_scenario

DATA = Path(__file__).resolve().parents[1] / "src" / "hemap" / "data"


@pytest.fixture(scope="session")
def ballast():
    return load_graph(DATA / "ballast7.json")


@pytest.fixture(scope="session")
def triangle():
    return load_graph(DATA / "triangle3.json")


@pytest.fixture(scope="session")
def tank():
    return load_scenario(default_scenario_path())


def random_strong_graph(rng: np.random.Generator, n: int, p: float = 0.4):
    """A bidirectional ring plus random extra directed edges: always strongly connected."""
    pairs = [(i, (i + 1) % n) for i in range(n)] if n > 2 else [(0, 1)]
    extra = [(i, j) for i in range(n) for j in range(n) if i != j and rng.random() < p]
    return undirected_graph(n, pairs, extra)


INSPECTION_TRIALS = 15
INSPECTION_SEED = 2024


class InspectionStudy(dict):
    elapsed: float = 0.0


@pytest.fixture(scope="session")
def inspection_records(tank):
    """The seeded 15-trial inspection study, shared by planner properties and the acceptance check."""
    from hemap.planner import PLANNERS, inspection_trials

    t0 = time.perf_counter()
    study = InspectionStudy(inspection_trials(tank, PLANNERS, INSPECTION_TRIALS, INSPECTION_SEED, steps=35))
    study.elapsed = time.perf_counter() - t0
    return study


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE: dict[str, str] = {}


def record_acceptance(name: str, ok: bool, detail: str) -> str:
    line = f"{name} {'PASS' if ok else 'FAIL'}: {detail}"
    ACCEPTANCE[name] = line
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE, key=lambda k: int(k[2:])):
            terminalreporter.write_line(ACCEPTANCE[key])
