import itertools
import warnings

import numpy as np
import pytest

from augward.graph import Graph


def perm_min(C):
    """Minimum mean assignment cost by enumerating every permutation."""
    n = C.shape[0]
    return min(C[np.arange(n), list(p)].mean() for p in itertools.permutations(range(n)))


def random_graph(rng, n, d=2, p_edge=0.4, label=None):
    edges = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < p_edge]
    return Graph.from_edges(n, edges, rng.normal(size=(n, d)), label)


def path_graph(n, features=None):
    return Graph.from_edges(n, [(i, i + 1) for i in range(n - 1)], features)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(autouse=True)
def _quiet_grid_warnings():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message=".*outside the usual grid.*")
        yield


# acceptance report ----------------------------------------------------------------

ACCEPTANCE = {}


def record(number, ok, detail):
    ACCEPTANCE[number] = (bool(ok), detail)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
