"""Edge-count statistics and their exact permutation-null moments.

Under the permutation null a uniformly random m-subset of the N nodes is
sample 1. For an ordered pair of edges (e, f), the chance that both lie
inside sample 1 depends only on how many distinct nodes they span, so
E[R1^2] splits into four classes of ordered edge pairs:

    same edge          |G|      pairs, 2 nodes
    reversed edge      N0       pairs, 2 nodes
    one shared node    C1 = sum_i |G_i|^2 - 2|G| - 2 N0, 3 nodes
    disjoint           D  = |G|^2 - |G| - N0 - C1,       4 nodes

and E[R1 R2] only involves the disjoint class.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .graphs import DirectedGraph, mutual_edge_count

STATISTICS = ("get", "wet", "met", "oet")

# det(Cov) <= SINGULAR_RTOL * Var1 * Var2 counts as singular
SINGULAR_RTOL = 1e-12


class DegenerateCovariance(ArithmeticError):
    """The permutation covariance of (R1, R2) is singular."""


class ZeroVariance(ArithmeticError):
    """A standardizing variance is zero."""


@dataclass(frozen=True)
class LabelVector:
    """Sample labels, 1 for X and 2 for Y."""

    labels: np.ndarray = field(repr=False)

    def __post_init__(self):
        lab = np.asarray(self.labels, dtype=np.int8).ravel()
        if not np.all((lab == 1) | (lab == 2)):
            raise ValueError("labels must be 1 or 2")
        if not np.any(lab == 1) or not np.any(lab == 2):
            raise ValueError("both samples must be non-empty")
        lab.setflags(write=False)
        object.__setattr__(self, "labels", lab)

    @classmethod
    def from_sample_x(cls, x_nodes, N: int) -> LabelVector:
        lab = np.full(N, 2, np.int8)
        lab[np.asarray(list(x_nodes), dtype=np.int64)] = 1
        return cls(lab)

    @property
    def N(self) -> int:
        return len(self.labels)

    @property
    def m(self) -> int:
        return int(np.sum(self.labels == 1))

    @property
    def n(self) -> int:
        return int(np.sum(self.labels == 2))


@dataclass(frozen=True)
class EdgeCounts:
    r1: int
    r2: int
    rb: int

    @property
    def total(self) -> int:
        return self.r1 + self.r2 + self.rb


@dataclass(frozen=True)
class NullMoments:
    """Permutation-null moments of (R1, R2).

    Fields are floats for a single split; the scan stores arrays over the
    split point in the same structure, and every property broadcasts.
    """

    N: int
    m: int
    n_edges: int
    e1: float
    e2: float
    v1: float
    v2: float
    cov: float

    @property
    def n(self):
        return self.N - self.m

    @property
    def e_rb(self):
        return self.n_edges - self.e1 - self.e2

    @property
    def v_rb(self):
        return self.v1 + self.v2 + 2 * self.cov

    @property
    def weights(self):
        """Weights of R1 and R2 in the weighted count: (n-1)/(N-2), (m-1)/(N-2)."""
        return (self.n - 1) / (self.N - 2), (self.m - 1) / (self.N - 2)

    @property
    def e_rw(self):
        q, p = self.weights
        return q * self.e1 + p * self.e2

    @property
    def v_rw(self):
        q, p = self.weights
        return q * q * self.v1 + p * p * self.v2 + 2 * p * q * self.cov

    @property
    def e_rd(self):
        return self.e1 - self.e2

    @property
    def v_rd(self):
        return self.v1 + self.v2 - 2 * self.cov

    @property
    def cov_rw_rd(self):
        q, p = self.weights
        return q * self.v1 - p * self.v2 + (p - q) * self.cov

    def covariance(self) -> np.ndarray:
        return np.array([[self.v1, self.cov], [self.cov, self.v2]])


@dataclass(frozen=True)
class StatisticValue:
    kind: str
    value: float
    components: dict = field(default_factory=dict)


def labels_array(lv) -> np.ndarray:
    return lv.labels if isinstance(lv, LabelVector) else LabelVector(lv).labels


def edge_counts(g: DirectedGraph, lv: LabelVector | np.ndarray) -> EdgeCounts:
    lab = labels_array(lv)
    if len(lab) != g.N:
        raise ValueError(f"label vector has length {len(lab)}, graph has {g.N} nodes")
    la, lb = lab[g.edges[:, 0]], lab[g.edges[:, 1]]
    r1 = int(np.sum((la == 1) & (lb == 1)))
    r2 = int(np.sum((la == 2) & (lb == 2)))
    return EdgeCounts(r1, r2, g.n_edges - r1 - r2)


@dataclass(frozen=True)
class PairClasses:
    """Counts of ordered edge pairs by how many nodes they span."""

    N: int
    n_edges: int
    n_mutual: int
    one_shared: int
    disjoint: int

    @classmethod
    def of(cls, g: DirectedGraph) -> PairClasses:
        G = g.n_edges
        n0 = mutual_edge_count(g)
        sumsq = int(np.sum(g.degrees().astype(np.int64) ** 2))
        c1 = sumsq - 2 * G - 2 * n0
        return cls(g.N, G, n0, c1, G * G - G - n0 - c1)


def _falling_ratio(m, N, k):
    """m(m-1)...(m-k+1) / (N(N-1)...(N-k+1)), zero once m runs out."""
    m = np.asarray(m, dtype=float)
    out = np.ones_like(m)
    for i in range(k):
        num = np.clip(m - i, 0, None)
        den = N - i
        out = out * (num / den if den > 0 else np.zeros_like(num))
    return out


def moment_arrays(pc: PairClasses, m):
    """``(e1, e2, v1, v2, cov)`` for one or many sample-1 sizes ``m``."""
    N = pc.N
    m = np.asarray(m, dtype=float)
    n = N - m
    G = pc.n_edges
    p2, p3, p4 = (_falling_ratio(m, N, k) for k in (2, 3, 4))
    q2, q3, q4 = (_falling_ratio(n, N, k) for k in (2, 3, 4))
    e1 = G * p2
    e2 = G * q2
    v1 = (G + pc.n_mutual) * p2 + pc.one_shared * p3 + pc.disjoint * p4 - e1 * e1
    v2 = (G + pc.n_mutual) * q2 + pc.one_shared * q3 + pc.disjoint * q4 - e2 * e2
    # P(two given nodes in sample 1 and two others in sample 2)
    if N >= 4:
        cross = p2 * np.clip(n, 0, None) * np.clip(n - 1, 0, None) / ((N - 2) * (N - 3))
    else:
        cross = np.zeros_like(m)
    cov = pc.disjoint * cross - e1 * e2
    return e1, e2, v1, v2, cov


def permutation_null_moments(g: DirectedGraph, m: int, classes: PairClasses | None = None) -> NullMoments:
    """Exact mean, variance and covariance of (R1, R2) over all m-subsets."""
    N = g.N
    if not 1 <= m <= N - 1:
        raise ValueError(f"sample size m must be in [1, {N - 1}], got {m}")
    pc = classes or PairClasses.of(g)
    e1, e2, v1, v2, cov = (float(x) for x in moment_arrays(pc, m))
    return NullMoments(N, int(m), g.n_edges, e1, e2, v1, v2, cov)


def enumerate_null(g: DirectedGraph, m: int, cap: int = 10**6, chunk: int = 50_000) -> dict[tuple[int, int], Fraction]:
    """Exact joint law of (R1, R2) by visiting every m-subset."""
    N = g.N
    if not 1 <= m <= N - 1:
        raise ValueError(f"sample size m must be in [1, {N - 1}], got {m}")
    total = math.comb(N, m)
    if total > cap:
        raise ValueError(f"C({N},{m}) = {total} exceeds the enumeration cap {cap}")
    ea, eb = g.edges[:, 0], g.edges[:, 1]
    counts: dict[tuple[int, int], int] = {}
    combos = itertools.combinations(range(N), m)
    while True:
        block = np.array(list(itertools.islice(combos, chunk)), dtype=np.int64).reshape(-1, m)
        if len(block) == 0:
            break
        in1 = np.zeros((len(block), N), dtype=bool)
        np.put_along_axis(in1, block, True, axis=1)
        r1 = np.sum(in1[:, ea] & in1[:, eb], axis=1)
        r2 = np.sum(~in1[:, ea] & ~in1[:, eb], axis=1)
        keys, cnt = np.unique(np.column_stack([r1, r2]), axis=0, return_counts=True)
        for (a, b), c in zip(keys.tolist(), cnt.tolist()):
            counts[(a, b)] = counts.get((a, b), 0) + c
    return {k: Fraction(v, total) for k, v in sorted(counts.items())}


def table_moments(table: dict[tuple[int, int], Fraction]) -> tuple[Fraction, ...]:
    """Exact ``(e1, e2, v1, v2, cov)`` of an enumerated (R1, R2) law."""
    e1 = sum(p * a for (a, _), p in table.items())
    e2 = sum(p * b for (_, b), p in table.items())
    v1 = sum(p * (a - e1) ** 2 for (a, _), p in table.items())
    v2 = sum(p * (b - e2) ** 2 for (_, b), p in table.items())
    cov = sum(p * (a - e1) * (b - e2) for (a, b), p in table.items())
    return e1, e2, v1, v2, cov


# vectorized cores: counts may be arrays, and so may the fields of ``nm``


def is_singular(nm: NullMoments):
    return nm.v1 * nm.v2 - nm.cov * nm.cov <= SINGULAR_RTOL * nm.v1 * nm.v2


def get_values(r1, r2, nm: NullMoments):
    """Quadratic form of (R1-E1, R2-E2) with the inverse 2x2 covariance."""
    det = np.asarray(nm.v1 * nm.v2 - nm.cov * nm.cov, dtype=float)
    a, b = r1 - nm.e1, r2 - nm.e2
    with np.errstate(divide="ignore", invalid="ignore"):
        return (nm.v2 * a * a - 2 * nm.cov * a * b + nm.v1 * b * b) / det


def zw_zd_values(r1, r2, nm: NullMoments):
    q, p = nm.weights
    with np.errstate(divide="ignore", invalid="ignore"):
        zw = (q * (r1 - nm.e1) + p * (r2 - nm.e2)) / np.sqrt(nm.v_rw)
        zd = ((r1 - nm.e1) - (r2 - nm.e2)) / np.sqrt(nm.v_rd)
    return zw, zd


def oet_values(r1, r2, nm: NullMoments):
    rb = nm.n_edges - r1 - r2
    with np.errstate(divide="ignore", invalid="ignore"):
        return -(rb - nm.e_rb) / np.sqrt(nm.v_rb)


def statistic_values(kind: str, r1, r2, nm: NullMoments):
    """Statistic ``kind`` for array inputs; nan where it is undefined."""
    if kind == "get":
        return np.where(is_singular(nm), np.nan, get_values(r1, r2, nm))
    if kind == "wet":
        zw, _ = zw_zd_values(r1, r2, nm)
        return np.where(nm.v_rw > 0, zw, np.nan)
    if kind == "met":
        zw, zd = zw_zd_values(r1, r2, nm)
        return np.where((nm.v_rw > 0) & (nm.v_rd > 0), np.maximum(zw, np.abs(zd)), np.nan)
    if kind == "oet":
        return np.where(nm.v_rb > 0, oet_values(r1, r2, nm), np.nan)
    raise ValueError(f"unknown statistic {kind!r}; choose from {STATISTICS}")


def get_statistic(ec: EdgeCounts, nm: NullMoments) -> StatisticValue:
    if is_singular(nm):
        raise DegenerateCovariance(
            "permutation covariance of (R1, R2) is singular; this happens when all "
            "node degrees are equal or one sample is too small"
        )
    s = float(get_values(ec.r1, ec.r2, nm))
    return StatisticValue("get", max(s, 0.0), {"R1": ec.r1, "R2": ec.r2})


def zw_zd(ec: EdgeCounts, nm: NullMoments) -> tuple[float, float]:
    """Standardized weighted count and standardized difference R1 - R2."""
    if nm.N <= 2:
        raise ZeroVariance("need N > 2")
    if not nm.v_rw > 0:
        raise ZeroVariance("weighted count has zero permutation variance")
    if not nm.v_rd > 0:
        raise ZeroVariance("count difference has zero permutation variance")
    zw, zd = zw_zd_values(ec.r1, ec.r2, nm)
    return float(zw), float(zd)


def wet_statistic(ec: EdgeCounts, nm: NullMoments) -> StatisticValue:
    if nm.N <= 2 or not nm.v_rw > 0:
        raise ZeroVariance("weighted count has zero permutation variance")
    zw = float(zw_zd_values(ec.r1, ec.r2, nm)[0])
    return StatisticValue("wet", zw, {"Z_w": zw})


def met_statistic(ec: EdgeCounts, nm: NullMoments) -> StatisticValue:
    """max(Z_w, |Z_d|); large Z_w (not small) signals a difference."""
    zw, zd = zw_zd(ec, nm)
    return StatisticValue("met", max(zw, abs(zd)), {"Z_w": zw, "Z_d": zd})


def oet_statistic(ec: EdgeCounts, nm: NullMoments) -> StatisticValue:
    """Negated standardized between-sample count: few cross edges give a large value."""
    if not nm.v_rb > 0:
        raise ZeroVariance("between-sample count has zero permutation variance")
    z = float(oet_values(ec.r1, ec.r2, nm))
    return StatisticValue("oet", z, {"Rb": ec.rb})


def compute_statistic(kind: str, ec: EdgeCounts, nm: NullMoments) -> StatisticValue:
    if kind == "get":
        return get_statistic(ec, nm)
    if kind == "wet":
        return wet_statistic(ec, nm)
    if kind == "met":
        return met_statistic(ec, nm)
    if kind == "oet":
        return oet_statistic(ec, nm)
    raise ValueError(f"unknown statistic {kind!r}; choose from {STATISTICS}")
