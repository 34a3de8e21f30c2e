import numpy as np
import pytest
from hypothesis import HealthCheck, settings

import robustgraph
import robustgraph.graphs as graphs_mod
import robustgraph.inference as inference_mod
import robustgraph.simulate as simulate_mod
from robustgraph.data import neighbor_ranks, pairwise_distances
from robustgraph.graphs import DirectedGraph, objective_terms

settings.register_profile("suite", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("suite")

_original_build_krnng = graphs_mod.build_krnng
KRNNG_RUNS = []
ACCEPTANCE_LINES = []


def checked_build_krnng(rm, K=5, lam=0.3, seed=0, max_passes=100, backend=None):
    """build_krnng plus the descent checks that must hold on every run."""
    res = _original_build_krnng(rm, K, lam, seed, max_passes, backend)
    knng = graphs_mod.build_knng(rm, K)
    r, s = objective_terms(knng.neighbors, rm)
    assert res.initial_objective == r + lam * s
    trace = np.asarray(res.trace)
    assert np.all(np.diff(trace) < 0), "objective trace not strictly decreasing"
    if len(trace):
        assert trace[0] < res.initial_objective
    fr, fs = objective_terms(res.neighbors, rm)
    assert abs(res.objective - (fr + lam * fs)) <= 1e-9 * max(1.0, abs(res.objective))
    assert res.objective <= res.initial_objective
    assert res.passes <= max_passes
    if max_passes >= 100:
        assert res.converged, f"no convergence within {max_passes} passes"
    KRNNG_RUNS.append((res.passes, res.converged, res.moves))
    return res


@pytest.fixture(autouse=True)
def _check_every_krnng_run(monkeypatch):
    for mod in (graphs_mod, inference_mod, simulate_mod, robustgraph):
        monkeypatch.setattr(mod, "build_krnng", checked_build_krnng)
    yield


@pytest.fixture
def line3():
    """Points 0, 1, 3 on a line."""
    x = np.array([[0.0], [1.0], [3.0]])
    dm = pairwise_distances(x)
    return x, dm, neighbor_ranks(dm)


@pytest.fixture
def worked_graph():
    """Edges (1,2), (2,1), (3,4) in 1-based ids."""
    return DirectedGraph.from_edges([(1, 2), (2, 1), (3, 4)], N=4, one_based=True)


def random_graph(rng, N, directed_density=None):
    """Random directed graph without self-loops or duplicate edges."""
    p = rng.uniform(0.15, 0.7) if directed_density is None else directed_density
    mask = rng.random((N, N)) < p
    np.fill_diagonal(mask, False)
    ii, jj = np.nonzero(mask)
    if len(ii) == 0:
        ii, jj = np.array([0]), np.array([1])
    return DirectedGraph(N, np.column_stack([ii, jj]))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
    if KRNNG_RUNS:
        terminalreporter.write_line(f"K-RNNG descent checks passed on {len(KRNNG_RUNS)} runs")
