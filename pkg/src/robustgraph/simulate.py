"""Scenario samplers, label perturbations and Monte-Carlo power studies.

Every scenario is plain data (:class:`ScenarioSpec` / :class:`ChangeSpec`)
so presets can be listed, serialized and rebuilt from JSON. Covariances are
``scale * Sigma_d(r) + add * I`` with ``Sigma_d(r)[i, j] = r**|i-j|``; the
AR(1) part is drawn by recursion and the ``add * I`` part as independent
noise, so no d x d factorization is needed unless an explicit matrix is
given.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np
from scipy import stats

from .changepoint import ScanConfig, scan
from .data import Dataset, neighbor_ranks, pairwise_distances, pool
from .graphs import DirectedGraph, build_kmst, build_knng, build_krnng, graph_stats
from .inference import TestConfig, graph_test

FAMILIES = ("normal", "lognormal", "t")
MEAN_RULES = ("zero", "scaled_ones", "ones", "ones_over_d", "first_sqrt", "first_cbrt")


@dataclass(frozen=True)
class Distribution:
    family: str = "normal"
    mean: str = "zero"
    shift: float = 0.0
    r: float = 0.0
    scale: float = 1.0
    add: float = 0.0
    nu: float = 5.0
    cov_matrix: tuple | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.mean not in MEAN_RULES:
            raise ValueError(f"unknown mean rule {self.mean!r}")
        if not 0 <= self.r < 1:
            raise ValueError("AR(1) coefficient must lie in [0, 1)")
        if self.shift < 0:
            raise ValueError("mean shift must be >= 0")
        if self.scale < 0 or self.add < 0:
            raise ValueError("covariance scale and additive term must be >= 0")
        if self.nu <= 0:
            raise ValueError("degrees of freedom must be > 0")

    def mean_vector(self, d: int) -> np.ndarray:
        mu = np.zeros(d)
        if self.mean == "scaled_ones":
            mu[:] = self.shift / math.sqrt(d)
        elif self.mean == "ones":
            mu[:] = self.shift
        elif self.mean == "ones_over_d":
            mu[:] = self.shift / d
        elif self.mean == "first_sqrt":
            mu[: math.isqrt(d)] = self.shift
        elif self.mean == "first_cbrt":
            mu[: _icbrt(d)] = self.shift
        return mu

    def covariance(self, d: int) -> np.ndarray:
        if self.cov_matrix is not None:
            return np.asarray(self.cov_matrix, dtype=float)
        idx = np.arange(d)
        return self.scale * self.r ** np.abs(idx[:, None] - idx[None, :]) + self.add * np.eye(d)

    def sample(self, size: int, d: int, rng: np.random.Generator) -> np.ndarray:
        if self.cov_matrix is not None:
            z = mvn_sample(self.covariance(d), size, rng)
        else:
            z = math.sqrt(self.scale) * ar1_normal(size, d, self.r, rng)
            if self.add > 0:
                z += math.sqrt(self.add) * rng.standard_normal((size, d))
        mu = self.mean_vector(d)
        if self.family == "normal":
            return mu + z
        if self.family == "lognormal":
            return np.exp(mu + z)
        w = rng.chisquare(self.nu, size=(size, 1))
        return mu + z / np.sqrt(w / self.nu)


def _icbrt(d: int) -> int:
    c = int(round(d ** (1 / 3)))
    while c**3 > d:
        c -= 1
    while (c + 1) ** 3 <= d:
        c += 1
    return c


def ar1_normal(size: int, d: int, r: float, rng: np.random.Generator) -> np.ndarray:
    """Rows distributed N(0, Sigma_d(r)) via x_1 = z_1, x_k = r x_{k-1} + sqrt(1-r^2) z_k."""
    z = rng.standard_normal((size, d))
    if r == 0:
        return z
    x = np.empty_like(z)
    x[:, 0] = z[:, 0]
    c = math.sqrt(1 - r * r)
    for k in range(1, d):
        x[:, k] = r * x[:, k - 1] + c * z[:, k]
    return x


def mvn_sample(cov: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    """Zero-mean normal rows with covariance ``cov`` (symmetric square root)."""
    vals, vecs = np.linalg.eigh(cov)
    if vals.min() < -1e-10 * max(1.0, vals.max()):
        raise ValueError("covariance matrix is not positive semidefinite")
    root = vecs * np.sqrt(np.clip(vals, 0, None))
    return rng.standard_normal((size, cov.shape[0])) @ root.T


@dataclass(frozen=True)
class ScenarioSpec:
    """Two independent samples: m draws from ``x`` and n from ``y`` in R^d."""

    name: str
    d: int
    m: int
    n: int
    x: Distribution
    y: Distribution
    note: str = ""

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> ScenarioSpec:
        obj = dict(obj)
        obj["x"] = Distribution(**obj["x"])
        obj["y"] = Distribution(**obj["y"])
        return cls(**obj)


@dataclass(frozen=True)
class ChangeSpec:
    """Sequence of N draws switching from ``pre`` to ``post`` after ``tau`` rows.

    ``tau=None`` gives a sequence with no change.
    """

    name: str
    d: int
    N: int
    tau: int | None
    pre: Distribution
    post: Distribution
    note: str = ""

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> ChangeSpec:
        obj = dict(obj)
        obj["pre"] = Distribution(**obj["pre"])
        obj["post"] = Distribution(**obj["post"])
        return cls(**obj)


def sample_scenario(spec: ScenarioSpec | ChangeSpec, seed) -> tuple[Dataset, Dataset] | Dataset:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if isinstance(spec, ScenarioSpec):
        return Dataset(spec.x.sample(spec.m, spec.d, rng)), Dataset(spec.y.sample(spec.n, spec.d, rng))
    tau = spec.N if spec.tau is None else spec.tau
    if not 0 <= tau <= spec.N:
        raise ValueError("tau must lie in [0, N]")
    parts = [spec.pre.sample(tau, spec.d, rng), spec.post.sample(spec.N - tau, spec.d, rng)]
    return Dataset(np.vstack(parts))


# presets: name -> builder(delta, d, m, n) with defaults matching the studies


def _ar(r=0.5, **kw):
    return Distribution(r=r, **kw)


def _two(name, x, y, d, m, n, note=""):
    return ScenarioSpec(name, d, m, n, x, y, note)


PRESETS: dict[str, tuple[Callable, dict]] = {}


def _preset(name, **defaults):
    def wrap(fn):
        PRESETS[name] = (fn, defaults)
        return fn

    return wrap


@_preset("intro_i", delta=1.0, d=500, m=100, n=100)
def _intro_i(delta, d, m, n):
    s = delta / math.sqrt(d)
    return _two("intro_i", _ar(0.5), _ar(0.5, mean="scaled_ones", shift=delta, add=s), d, m, n)


@_preset("intro_ii", delta=0.1, d=500, m=100, n=100)
def _intro_ii(delta, d, m, n):
    return _two("intro_ii", _ar(0.6, family="lognormal"), _ar(0.2, family="lognormal", mean="first_sqrt", shift=delta), d, m, n)


@_preset("intro_iii", delta=0.1, d=500, m=100, n=100)
def _intro_iii(delta, d, m, n):
    return _two("intro_iii", _ar(0.6, family="t", nu=5), _ar(0.6, family="t", nu=5, mean="first_cbrt", shift=delta), d, m, n)


@_preset("toy_scale", delta=1.02, d=1000, m=100, n=100)
def _toy_scale(delta, d, m, n):
    return _two("toy_scale", Distribution(), Distribution(scale=delta), d, m, n)


@_preset("toy_scale_fixed_norm", delta=0.3, d=1000, m=100, n=100)
def _toy_fixed(delta, d, m, n):
    # ||(sigma - 1) I||_F = delta fixes sigma = 1 + delta / sqrt(d)
    return _two(
        "toy_scale_fixed_norm",
        Distribution(),
        Distribution(scale=1 + delta / math.sqrt(d)),
        d, m, n,
        note="reconstruction: sigma = 1 + delta/sqrt(d) so the Frobenius norm of the covariance gap is delta",
    )


@_preset("power_1", delta=1.0, d=500, m=100, n=100)
def _power_1(delta, d, m, n):
    return _two("power_1", _ar(), _ar(mean="scaled_ones", shift=delta), d, m, n)


@_preset("power_2", delta=1.0, d=500, m=100, n=100)
def _power_2(delta, d, m, n):
    return _two("power_2", _ar(), _ar(mean="scaled_ones", shift=delta, add=delta / math.sqrt(d)), d, m, n)


@_preset("power_3", delta=1.0, d=500, m=100, n=100)
def _power_3(delta, d, m, n):
    ln = dict(family="lognormal")
    return _two("power_3", _ar(**ln), _ar(mean="scaled_ones", shift=delta, **ln), d, m, n)


@_preset("power_4", delta=1.0, d=500, m=100, n=100)
def _power_4(delta, d, m, n):
    t5 = dict(family="t", nu=5)
    return _two("power_4", _ar(**t5), _ar(mean="scaled_ones", shift=delta, add=delta / math.sqrt(d), **t5), d, m, n)


@_preset("lambda_i", delta=1.03, d=500, m=200, n=100)
def _lambda_i(delta, d, m, n):
    return _two("lambda_i", _ar(), _ar(scale=delta), d, m, n)


@_preset("lambda_ii", delta=0.05, d=1000, m=100, n=200)
def _lambda_ii(delta, d, m, n):
    ln = dict(family="lognormal")
    return _two("lambda_ii", _ar(**ln), _ar(mean="ones", shift=delta, **ln), d, m, n)


@_preset("lambda_iii", delta=1.15, d=100, m=100, n=100)
def _lambda_iii(delta, d, m, n):
    ln = dict(family="lognormal")
    return _two("lambda_iii", _ar(**ln), _ar(scale=delta, **ln), d, m, n)


@_preset("lambda_iv", delta=1.35, d=500, m=100, n=100)
def _lambda_iv(delta, d, m, n):
    t5 = dict(family="t", nu=5)
    return _two("lambda_iv", _ar(**t5), _ar(scale=delta, **t5), d, m, n)


@_preset("lambda_v", delta=0.095, d=500, m=300, n=100)
def _lambda_v(delta, d, m, n):
    t5 = dict(family="t", nu=5)
    return _two("lambda_v", _ar(**t5), _ar(mean="ones", shift=delta, **t5), d, m, n)


@_preset("two_sample_1", delta=1.0, d=500, m=100, n=100)
def _ts_1(delta, d, m, n):
    return _two("two_sample_1", _ar(), _ar(mean="scaled_ones", shift=delta, add=delta / math.sqrt(d)), d, m, n)


@_preset("two_sample_2", delta=0.1, d=500, m=100, n=100)
def _ts_2(delta, d, m, n):
    ln = dict(family="lognormal")
    return _two("two_sample_2", _ar(0.6, **ln), _ar(0.2, mean="first_sqrt", shift=delta, **ln), d, m, n)


@_preset("two_sample_3", delta=0.1, d=500, m=100, n=100)
def _ts_3(delta, d, m, n):
    t2 = dict(family="t", nu=2)
    return _two("two_sample_3", _ar(**t2), _ar(mean="scaled_ones", shift=delta, add=delta, **t2), d, m, n)


@_preset("two_sample_4", delta=0.1, d=500, m=100, n=100)
def _ts_4(delta, d, m, n):
    t1 = dict(family="t", nu=1)
    return _two("two_sample_4", _ar(**t1), _ar(mean="scaled_ones", shift=delta, add=delta / 2, **t1), d, m, n)


CHANGE_PRESETS: dict[str, tuple[Callable, dict]] = {}


def _cp_preset(name, **defaults):
    def wrap(fn):
        CHANGE_PRESETS[name] = (fn, defaults)
        return fn

    return wrap


def _mid(N, tau):
    return N // 2 if tau is None else tau


@_cp_preset("cp_null", d=100, N=400)
def _cp_null(d, N):
    return ChangeSpec("cp_null", d, N, None, _ar(), _ar())


@_cp_preset("cp_1", delta=1.0, d=100, N=400, tau=None)
def _cp_1(delta, d, N, tau):
    return ChangeSpec("cp_1", d, N, _mid(N, tau), _ar(), _ar(mean="scaled_ones", shift=delta, add=delta / math.sqrt(d)))


@_cp_preset("cp_2", delta=0.3, d=100, N=400, tau=None)
def _cp_2(delta, d, N, tau):
    return ChangeSpec("cp_2", d, N, _mid(N, tau), Distribution(), Distribution(r=delta))


@_cp_preset("cp_3", delta=0.3, d=100, N=400, tau=None)
def _cp_3(delta, d, N, tau):
    t5 = dict(family="t", nu=5)
    return ChangeSpec("cp_3", d, N, _mid(N, tau), _ar(**t5), _ar(mean="ones_over_d", shift=delta, add=delta, **t5))


def preset(name: str, **overrides) -> ScenarioSpec | ChangeSpec:
    """Build a named scenario; keyword overrides replace the defaults."""
    if name in PRESETS:
        fn, defaults = PRESETS[name]
    elif name in CHANGE_PRESETS:
        fn, defaults = CHANGE_PRESETS[name]
    else:
        raise KeyError(f"unknown preset {name!r}; available: {sorted(PRESETS) + sorted(CHANGE_PRESETS)}")
    unknown = set(overrides) - set(defaults)
    if unknown:
        raise ValueError(f"preset {name!r} has no parameter(s) {sorted(unknown)}")
    return fn(**{**defaults, **overrides})


# label perturbations


@dataclass(frozen=True)
class Perturbation:
    kind: str = "random"
    count: int = 5

    def __post_init__(self):
        if self.kind not in ("random", "outlier", "hub"):
            raise ValueError(f"unknown perturbation {self.kind!r}")
        if self.count < 0:
            raise ValueError("count must be >= 0")


def perturb(labels, values: np.ndarray | None, graph: DirectedGraph | None, pk: Perturbation, seed=0) -> np.ndarray:
    """Flip the sample labels of ``pk.count`` selected nodes.

    random: uniformly chosen nodes. outlier: nodes farthest (Euclidean) from
    the pooled coordinate-wise mean. hub: nodes of largest total degree in
    ``graph``, ties to the smaller index.
    """
    lab = np.array(labels, dtype=np.int8)
    m, n = int(np.sum(lab == 1)), int(np.sum(lab == 2))
    if pk.count >= min(m, n):
        raise ValueError(f"perturbation count {pk.count} must be < min(m, n) = {min(m, n)}")
    if pk.kind == "random":
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        chosen = rng.choice(len(lab), size=pk.count, replace=False)
    elif pk.kind == "outlier":
        if values is None:
            raise ValueError("outlier perturbation needs the data")
        v = values.values if isinstance(values, Dataset) else np.asarray(values, float)
        dist = np.linalg.norm(v - v.mean(axis=0), axis=1)
        chosen = np.argsort(-dist, kind="stable")[: pk.count]
    else:
        if graph is None:
            raise ValueError("hub perturbation needs a graph")
        chosen = np.argsort(-graph.degrees(), kind="stable")[: pk.count]
    lab[chosen] = 3 - lab[chosen]
    return lab


# Monte-Carlo studies


@dataclass(frozen=True)
class Arm:
    """One test variant evaluated on every replicate."""

    cfg: TestConfig
    perturbation: Perturbation | None = None


def rep_seed(seed: int, rep: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed), int(rep)])


def _graph_for(cfg: TestConfig, dm, rm_cache: dict, krnng_seed) -> DirectedGraph:
    if cfg.graph == "kmst":
        return build_kmst(dm, cfg.K)
    if "rm" not in rm_cache:
        rm_cache["rm"] = neighbor_ranks(dm)
    rm = rm_cache["rm"]
    if cfg.graph == "knng":
        return build_knng(rm, cfg.K)
    return build_krnng(rm, cfg.K, cfg.lam, krnng_seed, cfg.max_passes).graph


def _one_rep(args) -> dict[str, tuple[bool, float | None]]:
    spec, arms, seed, rep = args
    data_ss, graph_ss, perm_ss = rep_seed(seed, rep).spawn(3)
    x, y = sample_scenario(spec, np.random.default_rng(data_ss))
    pooled = pool(x, y)
    metrics = {a.cfg.metric for a in arms.values()}
    dms = {mt: pairwise_distances(pooled, mt) for mt in metrics}
    krnng_seed = int(graph_ss.generate_state(1)[0])
    perm_seed = int(perm_ss.generate_state(1)[0])
    caches: dict = {mt: {} for mt in metrics}
    graphs: dict = {}
    out = {}
    for name, arm in arms.items():
        cfg = arm.cfg
        key = (cfg.graph, cfg.K, cfg.lam, cfg.metric, cfg.max_passes)
        if key not in graphs:
            graphs[key] = _graph_for(cfg, dms[cfg.metric], caches[cfg.metric], krnng_seed)
        g = graphs[key]
        lab = pooled.labels
        if arm.perturbation is not None and arm.perturbation.count > 0:
            lab = perturb(lab, pooled.values, g, arm.perturbation, np.random.default_rng(perm_seed))
        res = graph_test(g, lab, cfg.with_(seed=perm_seed))
        out[name] = (res.reject(), res.pvalue)
    return out


def _map(fn, items, n_jobs: int):
    if n_jobs is None or n_jobs <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=n_jobs) as ex:
        return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * n_jobs))))


def rejection_table(
    spec: ScenarioSpec,
    arms: dict[str, Arm],
    reps: int,
    seed: int = 0,
    n_jobs: int = 1,
) -> dict[str, np.ndarray]:
    """Per-replicate rejection indicators for every arm on shared data.

    Replicate r draws its data, K-RNNG node orders and perturbation/permutation
    randomness from seeds derived from ``(seed, r)``, so results do not depend
    on ``n_jobs``.
    """
    results = _map(_one_rep, [(spec, arms, seed, r) for r in range(reps)], n_jobs)
    return {name: np.array([res[name][0] for res in results]) for name in arms}


@dataclass
class PowerEstimate:
    power: float
    se: float
    reps: int
    rejections: int


def _power(rejected: np.ndarray) -> PowerEstimate:
    reps = len(rejected)
    k = int(np.sum(rejected))
    p = k / reps
    return PowerEstimate(p, math.sqrt(p * (1 - p) / reps), reps, k)


def estimate_power(
    spec: ScenarioSpec,
    cfg: TestConfig | None = None,
    reps: int = 200,
    alpha: float | None = None,
    perturbation: Perturbation | None = None,
    seed: int = 0,
    n_jobs: int = 1,
) -> PowerEstimate:
    """Fraction of replicates rejecting at level ``alpha``, with its standard error."""
    if reps < 50:
        raise ValueError("use at least 50 replicates")
    cfg = cfg or TestConfig()
    if alpha is not None:
        cfg = cfg.with_(alpha=alpha)
    table = rejection_table(spec, {"arm": Arm(cfg, perturbation)}, reps, seed, n_jobs)
    return _power(table["arm"])


def power_estimates(table: dict[str, np.ndarray]) -> dict[str, PowerEstimate]:
    return {k: _power(v) for k, v in table.items()}


def paired_sign_test(a: np.ndarray, b: np.ndarray) -> float:
    """One-sided exact p-value that arm ``a`` rejects more often than ``b``.

    Only discordant replicates count (McNemar's exact test).
    """
    a, b = np.asarray(a, bool), np.asarray(b, bool)
    wins = int(np.sum(a & ~b))
    losses = int(np.sum(~a & b))
    if wins + losses == 0:
        return 1.0
    return float(stats.binomtest(wins, wins + losses, 0.5, alternative="greater").pvalue)


def lambda_scan(
    source: ScenarioSpec | Dataset | np.ndarray,
    grid,
    K: int = 5,
    seed: int = 0,
    reps: int | None = None,
    cfg: TestConfig | None = None,
    n_jobs: int = 1,
) -> list[dict]:
    """Max degree of the K-RNNG for each lambda in ``grid`` (and power if asked).

    Power is estimated only when ``source`` is a scenario and ``reps`` is set.
    """
    grid = [float(v) for v in grid]
    if not grid:
        raise ValueError("lambda grid is empty")
    if isinstance(source, ScenarioSpec):
        x, y = sample_scenario(source, np.random.default_rng(rep_seed(seed, 0)))
        values = pool(x, y).values
    else:
        values = source.values if isinstance(source, Dataset) else np.asarray(source, float)
    rm = neighbor_ranks(pairwise_distances(values))
    rows = []
    for lam in grid:
        g = build_krnng(rm, K, lam, seed).graph
        row = {"lambda": lam, "max_degree": graph_stats(g).max_degree}
        if reps is not None and isinstance(source, ScenarioSpec):
            base = (cfg or TestConfig()).with_(graph="krnng", K=K, lam=lam)
            est = estimate_power(source, base, reps, seed=seed, n_jobs=n_jobs)
            row["power"] = est.power
            row["power_se"] = est.se
        rows.append(row)
    return rows


def degree_skewness(g: DirectedGraph) -> float:
    return float(stats.skew(g.degrees()))


def _one_cp_rep(args):
    spec, cfg, seed, rep = args
    data_ss, graph_ss, perm_ss = rep_seed(seed, rep).spawn(3)
    seq = sample_scenario(spec, np.random.default_rng(data_ss))
    cfg = replace(cfg, seed=int(perm_ss.generate_state(1)[0]))
    krnng_seed = int(graph_ss.generate_state(1)[0])
    dm = pairwise_distances(seq, cfg.metric)
    g = _graph_for(cfg, dm, {}, krnng_seed)
    res = scan(seq, cfg, graph=g)
    return res.significant, res.tau_hat, res.pvalue


@dataclass
class ChangePointEstimate:
    power: float
    accuracy: float
    reps: int
    tau_hats: list[int] = field(default_factory=list)
    pvalues: list[float] = field(default_factory=list)
    significant: list[bool] = field(default_factory=list)


def cp_power_accuracy(
    spec: ChangeSpec,
    cfg: ScanConfig | None = None,
    reps: int = 200,
    alpha: float | None = None,
    seed: int = 0,
    tol: int = 10,
    n_jobs: int = 1,
) -> ChangePointEstimate:
    """Power = share of significant scans; accuracy = share significant with |tau_hat - tau| <= tol."""
    cfg = cfg or ScanConfig()
    if alpha is not None:
        cfg = replace(cfg, alpha=alpha)
    results = _map(_one_cp_rep, [(spec, cfg, seed, r) for r in range(reps)], n_jobs)
    sig = [r[0] for r in results]
    taus = [r[1] for r in results]
    power = sum(sig) / reps
    if spec.tau is None:
        accuracy = 0.0
    else:
        accuracy = sum(s and abs(t - spec.tau) <= tol for s, t in zip(sig, taus)) / reps
    return ChangePointEstimate(power, accuracy, reps, taus, [r[2] for r in results], sig)
