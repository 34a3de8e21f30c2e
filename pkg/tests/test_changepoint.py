import csv
import itertools
import json
import math

import numpy as np
import pytest

from robustgraph import _backend
from robustgraph.changepoint import (
    MIN_SCAN_LENGTH,
    ScanConfig,
    ScanError,
    scan,
    scan_curve,
    scan_pvalue,
    scan_window,
)
from robustgraph.edgecount import edge_counts, permutation_null_moments, statistic_values
from robustgraph.graphs import DirectedGraph

from .conftest import random_graph


def test_window_bounds():
    assert scan_window(100, 0.05) == (5, 95)
    assert scan_window(20, 0.05) == (1, 19)
    assert scan_window(20, 0.2) == (4, 16)
    assert scan_window(30, 0.1) == (3, 27)
    with pytest.raises(ScanError):
        scan_window(3, 0.45)


@pytest.mark.parametrize("kw", [{"w": 0.0}, {"w": 0.5}, {"pvalue": "asymptotic"}, {"B": 0}])
def test_scan_config_validation(kw):
    with pytest.raises(ValueError):
        ScanConfig(**kw)


def test_curve_matches_two_sample_statistic_at_each_split():
    rng = np.random.default_rng(5)
    g = random_graph(rng, 12, 0.3)
    ts, curve = scan_curve(g, (2, 10), "get")
    for t, v in zip(ts, curve):
        lab = np.where(np.arange(12) < t, 1, 2)
        c = edge_counts(g, lab)
        nm = permutation_null_moments(g, int(t))
        assert v == pytest.approx(float(statistic_values("get", c.r1, c.r2, nm)), rel=1e-10, abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_curve_reverses_with_time(seed):
    rng = np.random.default_rng(seed)
    N = 15
    g = random_graph(rng, N)
    rev = DirectedGraph(N, N - 1 - g.edges)
    ts, a = scan_curve(g, (1, N - 1), "get")
    _, b = scan_curve(rev, (1, N - 1), "get")
    np.testing.assert_allclose(a, b[::-1], rtol=1e-10, atol=1e-12, equal_nan=True)


def test_curve_length_equals_window():
    rng = np.random.default_rng(0)
    res = scan(rng.normal(size=(40, 3)), ScanConfig(B=50))
    lo, hi = scan_window(40, 0.05)
    assert len(res.curve) == len(res.ts) == hi - lo + 1
    assert res.ts[0] <= res.tau_hat <= res.ts[-1]


def _early_change(N=20, t=3):
    rng = np.random.default_rng(7)
    x = rng.normal(size=(N, 2))
    x[t:] += 1000.0
    return x


def test_estimate_is_clamped_to_the_window():
    x = _early_change()
    assert scan(x, ScanConfig(B=50, w=0.05)).tau_hat == 3
    assert scan(x, ScanConfig(B=50, w=0.2)).tau_hat == 4


def test_scan_detects_clear_change():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(60, 10))
    x[25:] += 2.0
    res = scan(x, ScanConfig(B=199, seed=3))
    assert res.tau_hat == 25
    assert res.significant and res.pvalue == pytest.approx(1 / 200)


def test_scan_pvalue_matches_exhaustive_orderings():
    rng = np.random.default_rng(11)
    N = 8
    g = random_graph(rng, N, 0.35)
    window = (2, 6)
    ts = np.arange(2, 7)
    nms = {int(t): permutation_null_moments(g, int(t)) for t in ts}

    def max_stat(order):
        pos = np.empty(N, int)
        pos[np.asarray(order)] = np.arange(N)
        vals = []
        for t in ts:
            lab = np.where(pos < t, 1, 2)
            c = edge_counts(g, lab)
            vals.append(float(statistic_values("get", c.r1, c.r2, nms[int(t)])))
        return np.nanmax(vals)

    obs = max_stat(range(N))
    maxes = np.array([max_stat(p) for p in itertools.permutations(range(N))])
    tail = float(np.mean(maxes >= obs - 1e-9 * max(1.0, obs)))
    B = 20_000
    o, p = scan_pvalue(g, window, "get", B, seed=2)
    assert o == pytest.approx(obs, rel=1e-10)
    se = math.sqrt(tail * (1 - tail) / B)
    assert abs(p - (1 + B * tail) / (B + 1)) <= 3 * se + 1e-12


def test_scan_pvalue_backends_agree():
    if _backend.BACKEND != "cython":
        pytest.skip("compiled kernels not built")
    rng = np.random.default_rng(4)
    g = random_graph(rng, 30, 0.2)
    a = scan_pvalue(g, (2, 28), "get", 600, seed=9, backend="python")
    b = scan_pvalue(g, (2, 28), "get", 600, seed=9, backend="cython")
    assert a == b


def test_short_sequence_rejected():
    with pytest.raises(ScanError):
        scan(np.zeros((MIN_SCAN_LENGTH - 1, 2)) + np.arange(MIN_SCAN_LENGTH - 1)[:, None])


def test_result_serialization(tmp_path):
    rng = np.random.default_rng(2)
    res = scan(rng.normal(size=(30, 2)), ScanConfig(B=40, seed=1))
    d = res.to_dict()
    json.dumps(d)
    assert d["window"] == [2, 28]
    assert d["config"]["w"] == 0.05
    path = tmp_path / "curve.csv"
    res.write_curve(path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["t", "statistic"]
    assert len(rows) == len(res.ts) + 1
    assert float(rows[1][1]) == res.curve[0]


def test_scan_is_reproducible():
    rng = np.random.default_rng(8)
    x = rng.normal(size=(40, 4))
    a = scan(x, ScanConfig(B=300, seed=6))
    b = scan(x, ScanConfig(B=300, seed=6))
    assert a.to_dict() == b.to_dict()
