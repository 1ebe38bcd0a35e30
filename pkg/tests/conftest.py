import numpy as np
import pytest

from graphfield import CoefficientField, assemble, build_graph, build_mesh, builtin_graph

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def operators(name_or_graph, h, kappa2=1.0, H=1.0, alpha=0.0):
    g = builtin_graph(name_or_graph) if isinstance(name_or_graph, str) else name_or_graph
    mesh = build_mesh(g, h)
    return assemble(mesh, CoefficientField.build(g, kappa2, H), alpha)


def random_graph(rng: np.random.Generator, max_vertices=5, extra=3, loops=True):
    """Random connected multigraph: spanning tree plus extra edges (loops allowed)."""
    nv = int(rng.integers(2, max_vertices + 1))
    edges = [(int(rng.integers(0, i)), i, float(rng.uniform(0.5, 2.0))) for i in range(1, nv)]
    for _ in range(int(rng.integers(0, extra + 1))):
        a = int(rng.integers(0, nv))
        b = a if (loops and rng.random() < 0.3) else int(rng.integers(0, nv))
        edges.append((a, b, float(rng.uniform(0.5, 2.0))))
    return build_graph(edges)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
