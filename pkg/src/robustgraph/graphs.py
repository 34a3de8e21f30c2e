"""Similarity graphs on pooled observations.

Three constructions share one directed-edge representation:

* ``knng``: every node points to its K nearest neighbors by rank.
* ``kmst``: union of K successive minimum spanning trees, each built from
  edges the earlier trees did not use. Edges are stored once, as ``(i, j)``
  with ``i < j``.
* ``krnng``: the hub-penalized graph. It starts from the K-NNG and greedily
  re-wires one node at a time to lower

      sum_i sum_{j in C_i} R_i(j)  +  lam * sum_i |G_i|^2

  where ``|G_i|`` counts in- and out-edges of node i.

Node ids are 0-based internally; the CSV export uses 1-based ids.

Extension points not implemented here: a distance-valued first term in
place of ranks, and a hub-penalized K-MST.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import _backend
from .data import DistanceMatrix, RankMatrix

KINDS = ("knng", "kmst", "krnng")


class GraphError(ValueError):
    """Invalid graph construction request."""


@dataclass(frozen=True)
class DirectedGraph:
    N: int
    edges: np.ndarray = field(repr=False)
    kind: str = "custom"
    neighbors: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if edges.size and (edges.min() < 0 or edges.max() >= self.N):
            raise GraphError("edge endpoint out of range")
        if np.any(edges[:, 0] == edges[:, 1]):
            raise GraphError("self-loops are not allowed")
        keys = edges[:, 0] * self.N + edges[:, 1]
        if len(np.unique(keys)) != len(keys):
            raise GraphError("duplicate directed edge")
        edges.setflags(write=False)
        object.__setattr__(self, "edges", edges)

    @classmethod
    def from_edges(cls, edges: Sequence[tuple[int, int]], N: int | None = None, one_based: bool = False):
        arr = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if one_based:
            arr = arr - 1
        if N is None:
            N = int(arr.max()) + 1 if arr.size else 0
        return cls(N, arr)

    @classmethod
    def from_neighbors(cls, neighbors: np.ndarray, kind: str):
        nb = np.array(neighbors, dtype=np.int64)
        n, k = nb.shape
        edges = np.column_stack([np.repeat(np.arange(n), k), nb.ravel()])
        nb.setflags(write=False)
        return cls(n, edges, kind, nb)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def degrees(self) -> np.ndarray:
        """In-degree plus out-degree of every node."""
        return np.bincount(self.edges.ravel(), minlength=self.N)

    def edge_set(self) -> set[tuple[int, int]]:
        return {(int(a), int(b)) for a, b in self.edges}


def _check_k(K, N):
    if not 1 <= K <= N - 1:
        raise GraphError(f"K must be in [1, {N - 1}], got {K}")


def build_knng(rm: RankMatrix, K: int) -> DirectedGraph:
    """Each node points to the K nodes it ranks 1..K."""
    ranks = rm.values
    N = ranks.shape[0]
    _check_k(K, N)
    work = ranks.astype(np.int64)
    np.fill_diagonal(work, N)
    nb = np.argsort(work, axis=1, kind="stable")[:, :K]
    return DirectedGraph.from_neighbors(nb, "knng")


def build_kmst(dm: DistanceMatrix, K: int, backend: str | None = None) -> DirectedGraph:
    """Union of K successive minimum spanning trees (Kruskal).

    Equal lengths are visited in ``(i, j)`` order, so the result is
    deterministic on tied distances.
    """
    d = dm.values if isinstance(dm, DistanceMatrix) else np.asarray(dm, float)
    N = d.shape[0]
    if K < 1:
        raise GraphError(f"K must be >= 1, got {K}")
    if K * (N - 1) > N * (N - 1) // 2:
        raise GraphError(f"K={K} trees need {K * (N - 1)} edges; only {N * (N - 1) // 2} pairs exist")
    kern = _backend.get(backend) if backend else _backend.kernels
    ei, ej = np.triu_indices(N, k=1)
    order = np.lexsort((ej, ei, d[ei, ej]))
    ei = np.ascontiguousarray(ei[order], dtype=np.int64)
    ej = np.ascontiguousarray(ej[order], dtype=np.int64)
    used = np.zeros(len(ei), dtype=bool)
    for k in range(K):
        if kern.kruskal_tree(ei, ej, used, N) is None:
            raise GraphError(f"edges left after {k} trees do not span all nodes; K={K} is too large")
    edges = np.column_stack([ei[used], ej[used]])
    return DirectedGraph(N, edges, "kmst")


def objective_terms(neighbors: np.ndarray, rm: RankMatrix) -> tuple[int, int]:
    """``(rank_sum, sum of squared degrees)`` of a neighbor-set configuration."""
    nb = np.asarray(neighbors, dtype=np.int64)
    ranks = rm.values
    n, k = nb.shape
    if ranks.shape[0] != n:
        raise GraphError("neighbor sets and rank matrix disagree on N")
    rows = np.arange(n)[:, None]
    if np.any(nb == rows) or np.any(nb < 0) or np.any(nb >= n):
        raise GraphError("neighbor set contains the node itself or an invalid id")
    if any(len(set(row)) != k for row in nb.tolist()):
        raise GraphError("neighbor set has repeated entries")
    rank_sum = int(ranks[rows, nb].sum())
    deg = k + np.bincount(nb.ravel(), minlength=n)
    return rank_sum, int(np.sum(deg.astype(np.int64) ** 2))


def objective_value(neighbors, rm: RankMatrix, lam: float) -> float:
    """Rank-sum plus ``lam`` times the sum of squared total degrees."""
    if lam < 0:
        raise GraphError("lambda must be >= 0")
    if isinstance(neighbors, DirectedGraph):
        if neighbors.neighbors is None:
            raise GraphError("graph has no neighbor sets")
        neighbors = neighbors.neighbors
    rank_sum, sq_sum = objective_terms(neighbors, rm)
    return rank_sum + lam * sq_sum


@dataclass
class KRNNGResult:
    graph: DirectedGraph
    trace: list[float]
    passes: int
    converged: bool
    initial_objective: float
    moves: int = 0

    @property
    def neighbors(self) -> np.ndarray:
        return self.graph.neighbors

    @property
    def objective(self) -> float:
        return self.trace[-1] if self.trace else self.initial_objective


def build_krnng(
    rm: RankMatrix,
    K: int = 5,
    lam: float = 0.3,
    seed: int | np.random.Generator | None = 0,
    max_passes: int = 100,
    backend: str | None = None,
) -> KRNNGResult:
    """Greedy construction of the hub-penalized K-robust nearest neighbor graph.

    Starting from the K-NNG, each pass visits the nodes in a fresh random
    order. Node i scores every candidate j by

        W_i(j) = R_i(j) + lam * (|G_j*| + 1)^2,

    where ``|G_j*|`` is j's degree with i's current edge removed, takes the K
    lowest scores (ties to the smaller index) and keeps the new neighbor set
    only if the full objective strictly drops. Stops after a pass with no
    accepted move, or after ``max_passes`` passes (``converged=False``).

    The trace holds the objective after every accepted move.
    """
    ranks = np.ascontiguousarray(rm.values, dtype=np.int32)
    N = ranks.shape[0]
    _check_k(K, N)
    if not lam >= 0 or not math.isfinite(lam):
        raise GraphError(f"lambda must be a finite value >= 0, got {lam}")
    if max_passes < 1:
        raise GraphError("max_passes must be >= 1")
    kern = _backend.get(backend) if backend else _backend.kernels
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    nbrs = np.ascontiguousarray(build_knng(rm, K).neighbors, dtype=np.int64).copy()
    deg = (K + np.bincount(nbrs.ravel(), minlength=N)).astype(np.int64)
    rank_sum, sq_sum = objective_terms(nbrs, rm)
    lam = float(lam)
    initial = rank_sum + lam * sq_sum
    trace: list[float] = []
    converged = False
    passes = 0
    while passes < max_passes:
        passes += 1
        order = rng.permutation(N).astype(np.int64)
        rank_sum, sq_sum, moves = kern.krnng_pass(ranks, nbrs, deg, order, lam, rank_sum, sq_sum)
        trace.extend(r + lam * s for _, r, s in moves)
        if not moves:
            converged = True
            break
    graph = DirectedGraph.from_neighbors(nbrs, "krnng")
    return KRNNGResult(graph, trace, passes, converged, initial, len(trace))


def build_graph(kind: str, rm: RankMatrix | None = None, dm: DistanceMatrix | None = None,
                K: int = 5, lam: float = 0.3, seed=0, max_passes: int = 100) -> DirectedGraph:
    if kind == "knng":
        return build_knng(rm, K)
    if kind == "kmst":
        return build_kmst(dm, K)
    if kind == "krnng":
        return build_krnng(rm, K, lam, seed, max_passes).graph
    raise GraphError(f"unknown graph kind {kind!r}; choose from {KINDS}")


def mutual_edge_count(g: DirectedGraph) -> int:
    """Number of edges whose reverse is also present (N_0)."""
    e = g.edges
    keys = e[:, 0] * g.N + e[:, 1]
    rev = e[:, 1] * g.N + e[:, 0]
    return int(np.isin(rev, keys).sum())


@dataclass
class GraphStats:
    N: int
    n_edges: int
    degrees: np.ndarray
    centered: np.ndarray
    vg: float
    n_mutual: int
    max_degree: int
    degree_histogram: np.ndarray

    def to_dict(self) -> dict:
        return {
            "N": self.N,
            "n_edges": self.n_edges,
            "degrees": self.degrees.tolist(),
            "V_G": self.vg,
            "N0": self.n_mutual,
            "max_degree": self.max_degree,
            "degree_histogram": self.degree_histogram.tolist(),
        }


def graph_stats(g: DirectedGraph) -> GraphStats:
    deg = g.degrees()
    n_edges = g.n_edges
    centered = deg - 2.0 * n_edges / g.N
    # exact for integer degrees: sum deg^2 - 4|G|^2 / N
    vg = float(np.sum(deg.astype(np.int64) ** 2)) - 4.0 * n_edges * n_edges / g.N
    return GraphStats(
        N=g.N,
        n_edges=n_edges,
        degrees=deg,
        centered=centered,
        vg=max(vg, 0.0),
        n_mutual=mutual_edge_count(g),
        max_degree=int(deg.max()) if g.N else 0,
        degree_histogram=np.bincount(deg),
    )


def _multiplicity_matrix(g: DirectedGraph) -> np.ndarray:
    a = np.zeros((g.N, g.N), dtype=np.int64)
    np.add.at(a, (g.edges[:, 0], g.edges[:, 1]), 1)
    return a + a.T


def square_count(g: DirectedGraph) -> int:
    """Number of 4-edge subsets whose undirected support is a simple 4-cycle.

    Orientation is ignored; a pair joined in both directions contributes
    a factor of 2. Each cycle a-b-c-d is counted through its two diagonals
    using walks of length two.
    """
    # float64 matmul is exact here (entries far below 2**53) and uses BLAS
    a = _multiplicity_matrix(g).astype(np.float64)
    p = a @ a
    a2 = a * a
    q = a2 @ a2
    np.fill_diagonal(p, 0)
    np.fill_diagonal(q, 0)
    total = int(round(float(np.sum(p * p - q))))
    return total // 8


def cross_term(g: DirectedGraph, centered: np.ndarray | None = None) -> float:
    """Sum over nodes i of d_j * d_k over ordered pairs of distinct edges at i
    whose far endpoints j != k (d = centered degree)."""
    if centered is None:
        centered = graph_stats(g).centered
    e = g.edges
    # neighbor-degree sums per node, counting each incident edge
    s = np.zeros(g.N)
    np.add.at(s, e[:, 0], centered[e[:, 1]])
    np.add.at(s, e[:, 1], centered[e[:, 0]])
    # remove same-endpoint pairs: multiplicity^2 * d_j^2 per (i, j) pair
    pairs = np.sort(e, axis=1)
    uniq, mult = np.unique(pairs, axis=0, return_counts=True)
    same = np.sum(mult**2 * (centered[uniq[:, 0]] ** 2 + centered[uniq[:, 1]] ** 2))
    return float(np.sum(s**2) - same)


@dataclass
class DiagnosticsReport:
    sum_deg_sq: int
    sum_abs_centered_cubed: float
    sum_centered_cubed: float
    cross_term: float
    n_sq: int | None
    var_degree: float
    max_degree: int
    n_edges: int
    vg: float
    ratios: dict[str, float | None]
    flags: list[str]

    def to_dict(self) -> dict:
        return asdict(self)


def condition_diagnostics(g: DirectedGraph, size_cap: int = 2000) -> DiagnosticsReport:
    """Degree-based quantities that govern the chi-square limit of GET.

    Each sum is also reported divided by its normalizer so trends in N can
    be read off directly. ``n_sq`` is ``None`` when ``N > size_cap``.
    """
    st = graph_stats(g)
    c = st.centered
    G = st.n_edges
    vg = st.vg
    sum_deg_sq = int(np.sum(st.degrees.astype(np.int64) ** 2))
    abs3 = float(np.sum(np.abs(c) ** 3))
    cub = float(np.sum(c**3))
    cross = cross_term(g, c)
    flags = []
    n_sq = square_count(g) if g.N <= size_cap else None
    if n_sq is None:
        flags.append("n_sq_skipped")
    if vg <= 0:
        flags.append("zero_degree_variance")

    def ratio(num, den):
        if num is None or den <= 0:
            return None
        return float(num / den)

    ratios = {
        "sum_deg_sq/|G|^1.5": ratio(sum_deg_sq, G**1.5),
        "sum_abs_centered_cubed/V_G^1.5": ratio(abs3, vg**1.5),
        "sum_centered_cubed/(V_G*sqrt|G|)": ratio(cub, vg * math.sqrt(G)),
        "cross_term/(|G|*V_G)": ratio(cross, G * vg),
        "N_sq/|G|^2": ratio(n_sq, G**2),
    }
    return DiagnosticsReport(
        sum_deg_sq=sum_deg_sq,
        sum_abs_centered_cubed=abs3,
        sum_centered_cubed=cub,
        cross_term=cross,
        n_sq=n_sq,
        var_degree=vg / g.N,
        max_degree=st.max_degree,
        n_edges=G,
        vg=vg,
        ratios=ratios,
        flags=flags,
    )


def write_edge_list(g: DirectedGraph, path) -> None:
    """CSV with header ``i,j`` and 1-based node ids."""
    with open(path, "w", newline="") as fh:
        fh.write("i,j\n")
        for a, b in g.edges:
            fh.write(f"{a + 1},{b + 1}\n")


def stats_json(g: DirectedGraph, size_cap: int = 2000) -> str:
    payload = {
        "kind": g.kind,
        "stats": graph_stats(g).to_dict(),
        "diagnostics": condition_diagnostics(g, size_cap).to_dict(),
    }
    return json.dumps(payload, indent=2, sort_keys=True)
