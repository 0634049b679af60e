import numpy as np
import pytest

from edgeflow import scenarios
from edgeflow.cli import load_scenario
from edgeflow.constraints import EdgeConstraint
from edgeflow.graph import build_graph
from edgeflow.harness import Scenario, UniformInit
from edgeflow.objectives import Quadratic

# lines printed in the terminal summary by test_acceptance.py
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def edge_only_scenario():
    return load_scenario(scenarios.path("formation_edge_only"))


@pytest.fixture(scope="session")
def objectives_scenario():
    return load_scenario(scenarios.path("formation_with_objectives"))


def random_connected_edges(rng, m):
    """Random spanning tree plus a few extra edges, as 1-based pairs in random orientation."""
    order = rng.permutation(m)
    pairs = set()
    for k in range(1, m):
        a, b = order[k], order[rng.integers(k)]
        pairs.add(frozenset((a, b)))
    for _ in range(rng.integers(0, m)):
        a, b = rng.choice(m, 2, replace=False)
        pairs.add(frozenset((a, b)))
    edges = []
    for p in pairs:
        a, b = sorted(p)
        if rng.random() < 0.5:
            a, b = b, a
        edges.append((int(a) + 1, int(b) + 1))
    rng.shuffle(edges)
    return edges


def random_full_row_rank(rng, d, n):
    while True:
        A = rng.normal(size=(d, n))
        s = np.linalg.svd(A, compute_uv=False)
        if s[-1] > 1e-2 * s[0]:
            return A


def random_consistent_scenario(rng, m=None, n=None, objective="quadratic"):
    """Connected graph with random full-row-rank A_ij and b_ij consistent with a hidden feasible point."""
    m = int(m or rng.integers(2, 7))
    n = int(n or rng.integers(1, 4))
    edges = random_connected_edges(rng, m)
    g = build_graph(m, edges)
    x_f = rng.uniform(-3, 3, size=(m, n))
    constraints = []
    for i, j in g.edges:
        d = int(rng.integers(1, n + 1))
        A = random_full_row_rank(rng, d, n)
        constraints.append(EdgeConstraint(i, j, A, A @ (x_f[i] - x_f[j])))
    objs = []
    for _ in range(m):
        L = rng.normal(size=(n, n))
        objs.append(Quadratic(Q=L @ L.T + 0.5 * np.eye(n), c=rng.normal(size=n), r=float(rng.normal())))
    return Scenario(
        n=n,
        graph=g,
        constraints=tuple(constraints),
        objectives=tuple(objs),
        mode="saddle_point",
        init=UniformInit(seed=int(rng.integers(1 << 30))),
    )
