"""Two-sample test drivers and sample-size calculators."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import stats

from . import edgecount as ec_mod
from .data import Dataset, neighbor_ranks, pairwise_distances, pool
from .edgecount import (
    DegenerateCovariance,
    LabelVector,
    NullMoments,
    PairClasses,
    ZeroVariance,
    edge_counts,
    labels_array,
    permutation_null_moments,
    statistic_values,
)
from .graphs import KINDS, DirectedGraph, build_kmst, build_knng, build_krnng, graph_stats

SCHEMA_VERSION = 1
PERM_CHUNK = 256
# relative slack when counting replicate statistics >= the observed one
TIE_RTOL = 1e-9


@dataclass(frozen=True)
class TestConfig:
    __test__ = False

    graph: str = "krnng"
    K: int = 5
    lam: float = 0.3
    statistic: str = "get"
    pvalue: str = "asymptotic"
    B: int = 1000
    seed: int = 0
    alpha: float = 0.05
    metric: str = "euclidean"
    max_passes: int = 100

    def __post_init__(self):
        if self.graph not in KINDS:
            raise ValueError(f"unknown graph kind {self.graph!r}")
        if self.statistic not in ec_mod.STATISTICS:
            raise ValueError(f"unknown statistic {self.statistic!r}")
        if self.pvalue not in ("asymptotic", "permutation"):
            raise ValueError("pvalue must be 'asymptotic' or 'permutation'")
        if self.statistic == "met" and self.pvalue == "asymptotic":
            raise ValueError("met has no asymptotic p-value here; use pvalue='permutation'")
        if self.B < 1:
            raise ValueError("B must be >= 1")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if not self.lam >= 0:
            raise ValueError("lambda must be >= 0")
        if self.K < 1:
            raise ValueError("K must be >= 1")

    def with_(self, **kw) -> TestConfig:
        return replace(self, **kw)


@dataclass
class TestResult:
    __test__ = False

    statistic: float | None
    pvalue: float | None
    mode: str
    config: TestConfig
    components: dict = field(default_factory=dict)
    graph_summary: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    failed: bool = False
    explanation: str = ""

    def reject(self, alpha: float | None = None) -> bool:
        alpha = self.config.alpha if alpha is None else alpha
        return self.pvalue is not None and self.pvalue <= alpha

    def to_dict(self) -> dict:
        out = {
            "schema_version": SCHEMA_VERSION,
            "statistic": self.statistic,
            "components": self.components,
            "pvalue": self.pvalue,
            "mode": self.mode,
            "config": asdict(self.config),
            "graph_summary": self.graph_summary,
            "diagnostics": self.diagnostics,
        }
        if self.failed:
            out["failed"] = True
            out["explanation"] = self.explanation
        return out


def chi2_2_sf(s: float) -> float:
    """Survival function of chi-square with 2 degrees of freedom."""
    return math.exp(-s / 2.0)


def asymptotic_pvalue(kind: str, value: float) -> float:
    if kind == "get":
        return chi2_2_sf(max(value, 0.0))
    if kind in ("wet", "oet"):
        return float(stats.norm.sf(value))
    raise ValueError(f"no asymptotic p-value for {kind!r}; use permutation mode")


def build_graph(values: np.ndarray | Dataset, cfg: TestConfig, seed=None) -> DirectedGraph:
    """Similarity graph on the rows of ``values`` as configured."""
    dm = pairwise_distances(values, cfg.metric)
    if cfg.graph == "kmst":
        return build_kmst(dm, cfg.K)
    rm = neighbor_ranks(dm)
    if cfg.graph == "knng":
        return build_knng(rm, cfg.K)
    return build_krnng(rm, cfg.K, cfg.lam, cfg.seed if seed is None else seed, cfg.max_passes).graph


def graph_summary(g: DirectedGraph) -> dict:
    st = graph_stats(g)
    return {"kind": g.kind, "N": g.N, "n_edges": st.n_edges, "max_degree": st.max_degree, "V_G": st.vg}


def _derived_rng(seed: int, chunk: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(chunk)])


def random_label_matrix(N: int, m: int, B: int, seed: int, start: int = 0) -> np.ndarray:
    """Rows ``start .. start+B`` of an endless stream of random m-subsets.

    Each row is a boolean mask marking sample 1. Rows come in chunks of
    ``PERM_CHUNK``, chunk c drawn from a generator keyed on ``(seed, c)``, so
    replicate b depends only on ``(seed, b)``. ``start`` must fall on a chunk
    boundary.
    """
    if start % PERM_CHUNK:
        raise ValueError("start must be a multiple of PERM_CHUNK")
    out = np.zeros((B, N), dtype=bool)
    first = start // PERM_CHUNK
    for k, off in enumerate(range(0, B, PERM_CHUNK)):
        b = min(PERM_CHUNK, B - off)
        perms = _derived_rng(seed, first + k).permuted(np.tile(np.arange(N), (b, 1)), axis=1)
        np.put_along_axis(out[off : off + b], perms[:, :m], True, axis=1)
    return out


def permutation_pvalue(
    g: DirectedGraph,
    lv: LabelVector | np.ndarray,
    kind: str = "get",
    B: int = 1000,
    seed: int = 0,
    moments: NullMoments | None = None,
) -> float:
    """``(1 + #{stat_b >= stat_obs}) / (B + 1)`` over B random relabelings."""
    if B < 1:
        raise ValueError("B must be >= 1")
    lab = labels_array(lv)
    m = int(np.sum(lab == 1))
    nm = moments or permutation_null_moments(g, m)
    ea, eb = g.edges[:, 0], g.edges[:, 1]
    obs = edge_counts(g, lab)
    s_obs = float(statistic_values(kind, obs.r1, obs.r2, nm))
    if not np.isfinite(s_obs):
        raise DegenerateCovariance(f"{kind} statistic is undefined for this graph and sample size")
    exceed = 0
    for start in range(0, B, 4 * PERM_CHUNK):
        rows = min(4 * PERM_CHUNK, B - start)
        lab1 = random_label_matrix(g.N, m, rows, seed, start)
        r1 = np.sum(lab1[:, ea] & lab1[:, eb], axis=1)
        r2 = np.sum(~lab1[:, ea] & ~lab1[:, eb], axis=1)
        s = statistic_values(kind, r1, r2, nm)
        exceed += int(np.sum(s >= s_obs - TIE_RTOL * max(1.0, abs(s_obs))))
    return (1 + exceed) / (B + 1)


def graph_test(g: DirectedGraph, lv: LabelVector | np.ndarray, cfg: TestConfig) -> TestResult:
    """Run the configured statistic on a fixed graph and labelling."""
    lab = labels_array(lv)
    m, n = int(np.sum(lab == 1)), int(np.sum(lab == 2))
    summary = graph_summary(g)
    diagnostics = {"lambda_validity": lambda_validity(g.N, cfg.K, cfg.lam, m, n)} if cfg.graph == "krnng" else {}
    nm = permutation_null_moments(g, m)
    counts = edge_counts(g, lab)
    try:
        sv = ec_mod.compute_statistic(cfg.statistic, counts, nm)
    except (DegenerateCovariance, ZeroVariance) as exc:
        diagnostics["degenerate_covariance"] = True
        return TestResult(None, None, cfg.pvalue, cfg, {}, summary, diagnostics, True, str(exc))
    diagnostics["degenerate_covariance"] = False
    comps = dict(sv.components)
    comps.update({"R1": counts.r1, "R2": counts.r2, "Rb": counts.rb, "E_R1": nm.e1, "E_R2": nm.e2})
    if cfg.pvalue == "asymptotic":
        p = asymptotic_pvalue(cfg.statistic, sv.value)
    else:
        p = permutation_pvalue(g, lab, cfg.statistic, cfg.B, cfg.seed, nm)
    return TestResult(sv.value, p, cfg.pvalue, cfg, comps, summary, diagnostics)


def two_sample_test(x: Dataset | np.ndarray, y: Dataset | np.ndarray, cfg: TestConfig | None = None) -> TestResult:
    """Graph-based two-sample test on the pooled observations.

    The graph is built once on the pooled data; permutation mode only
    shuffles labels on that fixed graph.
    """
    cfg = cfg or TestConfig()
    x = x if isinstance(x, Dataset) else Dataset(x)
    y = y if isinstance(y, Dataset) else Dataset(y)
    if x.N < 2 or y.N < 2:
        raise ValueError("each sample needs at least 2 observations")
    pooled = pool(x, y)
    g = build_graph(pooled, cfg)
    return graph_test(g, pooled.labels, cfg)


# sample-size conditions for consistency of GET on the robust graph as d grows


def lambda_upper_bound(N, K):
    """Largest admissible lambda: (sqrt(8NK + 4N - 8K) - sqrt(8NK))^2 / 16."""
    N = np.asarray(N, dtype=float)
    return (np.sqrt(8 * N * K + 4 * N - 8 * K) - np.sqrt(8 * N * K)) ** 2 / 16


def min_size_bound(N, K, lam):
    """min(m, n) must exceed K + 2 lam + sqrt(8 lam K N)."""
    return K + 2 * lam + np.sqrt(8 * lam * K * np.asarray(N, dtype=float))


def lambda_validity(N: int, K: int, lam: float, m: float, n: float) -> dict:
    if not math.isclose(m + n, N):
        raise ValueError("N must equal m + n")
    ub = float(lambda_upper_bound(N, K))
    mb = float(min_size_bound(N, K, lam))
    return {
        "lambda_upper_bound": ub,
        "lambda_ok": bool(0 < lam < ub),
        "min_size_bound": mb,
        "min_size_ok": bool(min(m, n) > mb),
        "valid": bool(0 < lam < ub and min(m, n) > mb),
    }


def chi2_2_quantile(alpha: float) -> float:
    """Upper-alpha quantile of chi-square(2): -2 log(alpha)."""
    return -2.0 * math.log(alpha)


def _case_bound(big: float, small: float, K: int, lam: float, xi: float) -> float | None:
    """Threshold on N when the sample of size ``big`` has the larger spread.

    ``big``/``small`` only enter through their ratio.
    """
    r = big / small
    inner = K / lam + (2 * r * K / xi) * (1 + K / (2 * lam) + r * K / xi - K)
    if inner < 0:
        return None
    return xi**2 / (2 * r**2 * K**2) * (math.sqrt(K / lam) + math.sqrt(inner)) ** 2


def _first_int_above(bound: float) -> int:
    return math.floor(bound) + 1


def _first_n_where(pred, start: int = 2, cap: int = 10**9) -> int | None:
    lo = start
    hi = max(start, 1024)
    while hi <= cap:
        ns = np.arange(lo, hi + 1)
        ok = np.flatnonzero(pred(ns))
        if ok.size:
            return int(ns[ok[0]])
        lo, hi = hi + 1, hi * 8
    return None


@dataclass
class SampleSizeReport:
    N: int | None
    binding: list[str]
    per_condition: dict[str, int | None]
    xi: float
    feasible: bool


def consistency_sample_size(
    K: int,
    lam: float,
    alpha: float = 0.05,
    ratio: float = 1.0,
    sigma1_sq: float | None = None,
    sigma2_sq: float | None = None,
    v_sq: float | None = None,
) -> SampleSizeReport:
    """Smallest N meeting every high-dimensional consistency condition.

    ``ratio`` is m/n. Sample sizes are treated as the real numbers
    N*ratio/(1+ratio) and N/(1+ratio). Without the spread parameters all
    three cases are evaluated and the largest threshold wins; passing
    ``sigma1_sq``, ``sigma2_sq`` and ``v_sq`` selects the case they satisfy.
    """
    if not lam > 0:
        raise ValueError("lambda must be > 0")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if ratio <= 0:
        raise ValueError("ratio must be > 0")
    xi = chi2_2_quantile(alpha)
    frac_m = ratio / (1 + ratio)
    frac_small = min(frac_m, 1 - frac_m)

    cases = {
        "case1": _first_int_above(2.5 + xi / K + math.sqrt(0.25 + 3 * xi / K + xi**2 / K**2)),
        "case2": _case_bound(ratio, 1.0, K, lam, xi),
        "case3": _case_bound(1.0, ratio, K, lam, xi),
    }
    for key in ("case2", "case3"):
        if cases[key] is not None:
            cases[key] = _first_int_above(cases[key])

    if sigma1_sq is not None and sigma2_sq is not None and v_sq is not None:
        diff = sigma1_sq - sigma2_sq
        if abs(diff) < v_sq:
            active = ["case1"]
        elif diff > v_sq:
            active = ["case2"]
        elif -diff > v_sq:
            active = ["case3"]
        else:
            active = []
    else:
        active = ["case1", "case2", "case3"]

    per = {k: cases[k] for k in active}
    per["lambda_upper_bound"] = _first_n_where(lambda ns: lam < lambda_upper_bound(ns, K))
    per["min_size"] = _first_n_where(lambda ns: frac_small * ns > min_size_bound(ns, K, lam))
    feasible = bool(active) and all(v is not None for v in per.values())
    if not feasible:
        return SampleSizeReport(None, [], per, xi, False)
    overall = max(per.values())
    binding = [k for k, v in per.items() if v == overall]
    return SampleSizeReport(overall, binding, per, xi, True)
