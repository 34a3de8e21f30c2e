"""Offline single change-point detection with edge-count scan statistics.

The graph is built once on the whole time-ordered sequence. For each
candidate split t the first t observations play sample 1 and the rest
sample 2; the scan statistic is the maximum over t of the chosen two-sample
statistic. Significance comes from shuffling the time order on the fixed
graph.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _backend
from .data import Dataset
from .edgecount import NullMoments, PairClasses, moment_arrays, statistic_values
from .graphs import DirectedGraph
from .inference import PERM_CHUNK, SCHEMA_VERSION, TIE_RTOL, TestConfig, _derived_rng, build_graph, graph_summary

MIN_SCAN_LENGTH = 20


class ScanError(ValueError):
    """Scan cannot be carried out."""


@dataclass(frozen=True)
class ScanConfig(TestConfig):
    pvalue: str = "permutation"
    w: float = 0.05

    def __post_init__(self):
        super().__post_init__()
        if self.pvalue != "permutation":
            raise ValueError("scan p-values are permutation-based only")
        if not 0 < self.w < 0.5:
            raise ValueError("boundary fraction w must lie in (0, 0.5)")


@dataclass
class ScanResult:
    ts: np.ndarray
    curve: np.ndarray
    tau_hat: int
    max_stat: float
    pvalue: float | None
    significant: bool
    skipped: list[int] = field(default_factory=list)
    config: ScanConfig | None = None
    graph_summary: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "tau_hat": self.tau_hat,
            "max_statistic": self.max_stat,
            "pvalue": self.pvalue,
            "significant": self.significant,
            "skipped_t": self.skipped,
            "window": [int(self.ts[0]), int(self.ts[-1])],
            "config": asdict(self.config) if self.config else None,
            "graph_summary": self.graph_summary,
        }

    def write_curve(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "statistic"])
            for t, s in zip(self.ts.tolist(), self.curve.tolist()):
                w.writerow([t, "" if math.isnan(s) else repr(s)])


def scan_window(N: int, w: float) -> tuple[int, int]:
    """Candidate splits ``ceil(wN) .. floor((1-w)N)``, kept inside 1..N-1."""
    lo = max(1, math.ceil(round(w * N, 9)))
    hi = min(N - 1, math.floor(round((1 - w) * N, 9)))
    if lo > hi:
        raise ScanError(f"empty scan window for N={N}, w={w}")
    return lo, hi


def window_moments(g: DirectedGraph, ts: np.ndarray) -> NullMoments:
    """Null moments for every split in ``ts`` (array-valued fields)."""
    pc = PairClasses.of(g)
    e1, e2, v1, v2, cov = moment_arrays(pc, ts)
    return NullMoments(g.N, np.asarray(ts, float), g.n_edges, e1, e2, v1, v2, cov)


def _curves(g: DirectedGraph, pos: np.ndarray, ts: np.ndarray, nm: NullMoments, kind: str, kernels) -> np.ndarray:
    ea = np.ascontiguousarray(g.edges[:, 0])
    eb = np.ascontiguousarray(g.edges[:, 1])
    r1, r2 = kernels.prefix_counts(ea, eb, np.ascontiguousarray(pos, dtype=np.int64))
    return statistic_values(kind, r1[:, ts], r2[:, ts], nm)


def scan_curve(g: DirectedGraph, window: tuple[int, int], kind: str = "get", backend: str | None = None):
    """``(ts, values)`` of the statistic at every split in ``window``.

    Values are nan where the statistic is undefined (singular covariance).
    """
    kern = _backend.get(backend) if backend else _backend.kernels
    ts = np.arange(window[0], window[1] + 1)
    nm = window_moments(g, ts)
    curve = _curves(g, np.arange(g.N)[None, :], ts, nm, kind, kern)[0]
    return ts, curve


def _max_or_nan(curves: np.ndarray) -> np.ndarray:
    out = np.full(curves.shape[0], np.nan)
    ok = ~np.all(np.isnan(curves), axis=1)
    out[ok] = np.nanmax(curves[ok], axis=1)
    return out


def scan_pvalue(
    g: DirectedGraph,
    window: tuple[int, int],
    kind: str = "get",
    B: int = 1000,
    seed: int = 0,
    backend: str | None = None,
) -> tuple[float, float]:
    """``(observed max, p-value)`` with B random time orders on the fixed graph.

    Replicate b's ordering is drawn from a generator keyed on
    ``(seed, b // PERM_CHUNK)``.
    """
    kern = _backend.get(backend) if backend else _backend.kernels
    ts = np.arange(window[0], window[1] + 1)
    nm = window_moments(g, ts)
    obs_curve = _curves(g, np.arange(g.N)[None, :], ts, nm, kind, kern)
    obs = float(_max_or_nan(obs_curve)[0])
    if math.isnan(obs):
        raise ScanError("statistic undefined at every split in the window")
    thresh = obs - TIE_RTOL * max(1.0, abs(obs))
    exceed = 0
    for c, start in enumerate(range(0, B, PERM_CHUNK)):
        b = min(PERM_CHUNK, B - start)
        pos = _derived_rng(seed, c).permuted(np.tile(np.arange(g.N), (b, 1)), axis=1)
        maxes = _max_or_nan(_curves(g, pos, ts, nm, kind, kern))
        exceed += int(np.sum(maxes >= thresh))
    return obs, (1 + exceed) / (B + 1)


def scan(seq: Dataset | np.ndarray, cfg: ScanConfig | None = None, graph: DirectedGraph | None = None) -> ScanResult:
    """Locate a single change-point in a time-ordered sequence.

    ``tau_hat`` is the split size t (first t rows before the change) that
    maximizes the statistic; ties go to the smallest t.
    """
    cfg = cfg or ScanConfig()
    seq = seq if isinstance(seq, Dataset) else Dataset(seq)
    N = seq.N
    if N < MIN_SCAN_LENGTH:
        raise ScanError(f"need at least {MIN_SCAN_LENGTH} observations, got {N}")
    window = scan_window(N, cfg.w)
    g = graph if graph is not None else build_graph(seq, cfg)
    ts, curve = scan_curve(g, window, cfg.statistic)
    skipped = ts[np.isnan(curve)].tolist()
    if len(skipped) == len(ts):
        raise ScanError("statistic undefined at every split in the window")
    best = int(np.nanargmax(curve))
    _, p = scan_pvalue(g, window, cfg.statistic, cfg.B, cfg.seed)
    return ScanResult(
        ts=ts,
        curve=curve,
        tau_hat=int(ts[best]),
        max_stat=float(curve[best]),
        pvalue=p,
        significant=p <= cfg.alpha,
        skipped=skipped,
        config=cfg,
        graph_summary=graph_summary(g),
    )
