import itertools
import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from robustgraph import graphs as G
from robustgraph.data import neighbor_ranks, pairwise_distances
from robustgraph.graphs import (
    DirectedGraph,
    GraphError,
    build_kmst,
    build_knng,
    condition_diagnostics,
    cross_term,
    graph_stats,
    objective_value,
    square_count,
    stats_json,
    write_edge_list,
)

from .conftest import random_graph


def krnng(*args, **kw):
    # resolve at call time so the suite-wide checks in conftest apply
    return G.build_krnng(*args, **kw)


def ranks_of(x):
    return neighbor_ranks(pairwise_distances(x))


# construction


def test_knng_on_a_line(line3):
    _, _, rm = line3
    g = build_knng(rm, 1)
    assert g.edge_set() == {(0, 1), (1, 0), (2, 1)}
    assert g.degrees().tolist() == [2, 3, 1]
    assert g.kind == "knng"


def test_knng_complete_when_k_is_n_minus_1():
    rm = ranks_of(np.random.default_rng(0).normal(size=(6, 2)))
    g = build_knng(rm, 5)
    assert g.n_edges == 30
    assert np.all(g.degrees() == 10)


@pytest.mark.parametrize("K", [0, 3, -1])
def test_knng_k_out_of_range(line3, K):
    with pytest.raises(GraphError):
        build_knng(line3[2], K)


def test_objective_values_on_a_line(line3):
    _, _, rm = line3
    g = build_knng(rm, 1)
    assert objective_value(g, rm, 0) == 3
    assert objective_value(g, rm, 1) == 17
    assert objective_value(g, rm, 0.3) == pytest.approx(7.2, abs=1e-12)


def test_objective_rejects_bad_neighbor_sets(line3):
    _, _, rm = line3
    with pytest.raises(GraphError):
        objective_value(np.array([[0], [0], [1]]), rm, 0.3)  # self loop
    with pytest.raises(GraphError):
        objective_value(np.array([[1, 1], [0, 2], [0, 1]]), rm, 0.3)  # repeated neighbor
    with pytest.raises(GraphError):
        objective_value(np.array([[1], [0]]), rm, 0.3)  # wrong N
    with pytest.raises(GraphError):
        objective_value(build_knng(rm, 1), rm, -1.0)


def test_kmst_on_a_line(line3):
    _, dm, _ = line3
    g = build_kmst(dm, 1)
    assert g.edge_set() == {(0, 1), (1, 2)}
    assert graph_stats(g).n_mutual == 0


def test_kmst_too_many_trees_on_three_points(line3):
    # after the first tree only one pair is left, so a second spanning tree cannot exist
    with pytest.raises(GraphError):
        build_kmst(line3[1], 2)


def test_kmst_ties_follow_edge_index_order():
    square = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    g = build_kmst(pairwise_distances(square), 1)
    assert g.edge_set() == {(0, 1), (0, 2), (1, 3)}


def _spanning_trees(n, pairs):
    """All spanning trees of the graph on ``pairs`` (brute force)."""
    for subset in itertools.combinations(range(len(pairs)), n - 1):
        parent = list(range(n))

        def find(a):
            while parent[a] != a:
                a = parent[a]
            return a

        ok = True
        for k in subset:
            a, b = find(pairs[k][0]), find(pairs[k][1])
            if a == b:
                ok = False
                break
            parent[a] = b
        if ok:
            yield subset


@pytest.mark.parametrize("seed", range(6))
def test_kmst_matches_brute_force_successive_trees(seed):
    rng = np.random.default_rng(seed)
    n = 5 + seed % 2
    x = rng.normal(size=(n, 2))
    dm = pairwise_distances(x).values
    K = 2
    used: set = set()
    expected = set()
    for _ in range(K):
        pairs = [(i, j) for i in range(n) for j in range(i + 1, n) if (i, j) not in used]
        best = min(_spanning_trees(n, pairs), key=lambda s: sum(dm[pairs[k]] for k in s))
        tree = {pairs[k] for k in best}
        used |= tree
        expected |= tree
    g = build_kmst(pairwise_distances(x), K)
    assert g.edge_set() == expected
    assert g.n_edges == K * (n - 1)


def test_kmst_backends_agree():
    dm = pairwise_distances(np.random.default_rng(3).normal(size=(60, 5)))
    assert build_kmst(dm, 4, backend="python").edge_set() == build_kmst(dm, 4, backend="cython").edge_set()


# K-RNNG


def test_krnng_lambda_zero_is_knng():
    rm = ranks_of(np.random.default_rng(1).normal(size=(80, 30)))
    res = krnng(rm, 5, 0.0, seed=4)
    assert res.graph.edge_set() == build_knng(rm, 5).edge_set()
    assert res.moves == 0 and res.converged and res.passes == 1


def test_krnng_keeps_out_degree_and_lowers_objective():
    rm = ranks_of(np.random.default_rng(2).normal(size=(120, 200)))
    res = krnng(rm, 5, 0.3, seed=0)
    nb = res.neighbors
    assert nb.shape == (120, 5)
    assert not np.any(nb == np.arange(120)[:, None])
    assert all(len(set(row)) == 5 for row in nb.tolist())
    assert res.objective < res.initial_objective
    assert res.objective == pytest.approx(objective_value(res.graph, rm, 0.3), rel=1e-12)
    assert res.graph.n_edges == 600


def test_krnng_reduces_max_degree_in_high_dimension():
    wins = 0
    for seed in range(7):
        rm = ranks_of(np.random.default_rng(seed).standard_normal((200, 500)))
        wins += graph_stats(krnng(rm, 5, 0.3, seed).graph).max_degree < graph_stats(build_knng(rm, 5)).max_degree
    assert wins >= 4


def test_krnng_is_seed_deterministic_and_backends_agree():
    rm = ranks_of(np.random.default_rng(5).normal(size=(90, 60)))
    a = krnng(rm, 4, 0.5, seed=11, backend="python")
    b = krnng(rm, 4, 0.5, seed=11, backend="cython")
    c = krnng(rm, 4, 0.5, seed=11)
    assert a.graph.edge_set() == b.graph.edge_set() == c.graph.edge_set()
    assert a.trace == b.trace


def test_krnng_pass_cap_is_reported():
    rm = ranks_of(np.random.default_rng(6).normal(size=(150, 300)))
    res = krnng(rm, 5, 2.0, seed=0, max_passes=1)
    assert res.passes == 1
    assert not res.converged
    assert res.moves > 0


@pytest.mark.parametrize("kw", [{"K": 0}, {"K": 10}, {"lam": -0.1}, {"lam": float("nan")}, {"max_passes": 0}])
def test_krnng_argument_errors(kw):
    rm = ranks_of(np.random.default_rng(0).normal(size=(10, 2)))
    args = {"K": 3, "lam": 0.3, "max_passes": 10} | kw
    with pytest.raises(GraphError):
        krnng(rm, args["K"], args["lam"], 0, args["max_passes"])


@given(
    st.integers(8, 40),
    st.integers(1, 30),
    st.integers(1, 4),
    st.floats(0.0, 3.0),
    st.integers(0, 2**31),
)
def test_krnng_properties(n, d, K, lam, seed):
    rm = ranks_of(np.random.default_rng(seed).normal(size=(n, d)))
    res = krnng(rm, K, lam, seed)
    assert res.neighbors.shape == (n, K)
    assert np.all(res.graph.degrees() >= K)
    if lam == 0:
        assert res.graph.edge_set() == build_knng(rm, K).edge_set()


# statistics and diagnostics


def test_stats_on_knng_line(line3):
    st_ = graph_stats(build_knng(line3[2], 1))
    assert (st_.n_edges, st_.n_mutual, st_.max_degree) == (3, 2, 3)
    assert st_.degrees.tolist() == [2, 3, 1]
    assert st_.vg == pytest.approx(2.0, abs=1e-12)


def test_stats_on_cycle_and_mutual_pair():
    cyc = DirectedGraph.from_edges([(1, 2), (2, 3), (3, 1)], one_based=True)
    s = graph_stats(cyc)
    assert s.degrees.tolist() == [2, 2, 2] and s.vg == 0 and s.n_mutual == 0
    pair = DirectedGraph.from_edges([(1, 2), (2, 1)], one_based=True)
    assert graph_stats(pair).n_mutual == 2


@given(st.integers(3, 9), st.integers(0, 2**31))
def test_stats_identities(n, seed):
    g = random_graph(np.random.default_rng(seed), n)
    s = graph_stats(g)
    deg = [int(v) for v in s.degrees]
    assert sum(deg) == 2 * g.n_edges
    centered = [Fraction(v) - Fraction(2 * g.n_edges, n) for v in deg]
    assert sum(centered) == 0
    exact_vg = sum(c * c for c in centered)
    assert exact_vg == sum(v * v for v in deg) - Fraction(4 * g.n_edges**2, n)
    assert s.vg == pytest.approx(float(exact_vg), abs=1e-9)
    mutual = sum((b, a) in g.edge_set() for a, b in g.edge_set())
    assert s.n_mutual == mutual


def test_diagnostics_on_cycle():
    rep = condition_diagnostics(DirectedGraph.from_edges([(1, 2), (2, 3), (3, 1)], one_based=True))
    assert rep.sum_deg_sq == 12
    assert rep.sum_abs_centered_cubed == 0
    assert rep.cross_term == 0
    assert rep.vg == 0 and rep.var_degree == 0
    assert "zero_degree_variance" in rep.flags


def test_square_count_on_square():
    sq = DirectedGraph.from_edges([(1, 2), (2, 3), (3, 4), (4, 1)], one_based=True)
    assert square_count(sq) == 1


def _brute_squares(g):
    edges = [tuple(e) for e in g.edges.tolist()]
    total = 0
    for sub in itertools.combinations(edges, 4):
        pairs = {frozenset(e) for e in sub}
        if len(pairs) != 4:
            continue
        nodes = set().union(*pairs)
        if len(nodes) != 4:
            continue
        deg = {v: sum(v in p for p in pairs) for v in nodes}
        if all(c == 2 for c in deg.values()):
            total += 1  # four distinct pairs, four nodes, all of degree 2: a simple 4-cycle
    return total


def _brute_cross(g, centered):
    total = 0.0
    for i in range(g.N):
        far = [b if a == i else a for a, b in g.edges.tolist() if i in (a, b)]
        for x, y in itertools.permutations(range(len(far)), 2):
            if far[x] != far[y]:
                total += centered[far[x]] * centered[far[y]]
    return total


@pytest.mark.parametrize("seed", range(12))
def test_square_count_and_cross_term_match_loops(seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, int(rng.integers(4, 8)), directed_density=rng.uniform(0.15, 0.45))
    assert square_count(g) == _brute_squares(g)
    c = graph_stats(g).centered
    assert cross_term(g) == pytest.approx(_brute_cross(g, c), abs=1e-9)


def test_diagnostics_on_random_knng_are_finite():
    rm = ranks_of(np.random.default_rng(9).normal(size=(50, 10)))
    g = build_knng(rm, 5)
    rep = condition_diagnostics(g)
    assert all(v is not None and np.isfinite(v) for v in rep.ratios.values())
    assert rep.cross_term == pytest.approx(_brute_cross(g, graph_stats(g).centered), rel=1e-12)
    assert rep.n_sq >= 0 and rep.flags == []
    skipped = condition_diagnostics(g, size_cap=10)
    assert skipped.n_sq is None and "n_sq_skipped" in skipped.flags
    assert skipped.ratios["N_sq/|G|^2"] is None


def test_graph_validation():
    with pytest.raises(GraphError):
        DirectedGraph(3, [(0, 0)])
    with pytest.raises(GraphError):
        DirectedGraph(3, [(0, 1), (0, 1)])
    with pytest.raises(GraphError):
        DirectedGraph(3, [(0, 3)])


def test_export(tmp_path, line3):
    g = build_knng(line3[2], 1)
    p = tmp_path / "e.csv"
    write_edge_list(g, p)
    assert p.read_text().splitlines() == ["i,j", "1,2", "2,1", "3,2"]
    blob = json.loads(stats_json(g))
    assert blob["stats"]["N0"] == 2
    assert blob["diagnostics"]["n_edges"] == 3
