import itertools
import json
import math

import numpy as np
import pytest
from scipy import integrate, stats

from robustgraph.data import Dataset
from robustgraph.edgecount import DegenerateCovariance, edge_counts, permutation_null_moments, statistic_values
from robustgraph.graphs import DirectedGraph
from robustgraph.inference import (
    PERM_CHUNK,
    SCHEMA_VERSION,
    TestConfig,
    asymptotic_pvalue,
    chi2_2_quantile,
    chi2_2_sf,
    consistency_sample_size,
    graph_test,
    lambda_upper_bound,
    lambda_validity,
    permutation_pvalue,
    random_label_matrix,
    two_sample_test,
)

from .conftest import random_graph


@pytest.mark.parametrize("s", [0.0, 0.3, 2.0, 5.0, 5.991, 12.0, 30.0])
def test_chi2_survival_closed_form(s):
    quad, _ = integrate.quad(lambda u: 0.5 * math.exp(-u / 2), s, s + 120.0, epsabs=1e-14, epsrel=1e-13)
    assert chi2_2_sf(s) == pytest.approx(quad, abs=1e-10)
    assert chi2_2_sf(s) == pytest.approx(stats.chi2.sf(s, 2), abs=1e-12)


def test_asymptotic_pvalue_examples():
    assert asymptotic_pvalue("get", 5.991) == pytest.approx(0.05, abs=5e-5)
    assert asymptotic_pvalue("get", 5.0) == pytest.approx(math.exp(-2.5), abs=1e-15)
    assert asymptotic_pvalue("wet", 1.6448536269514722) == pytest.approx(0.05, abs=1e-12)
    with pytest.raises(ValueError):
        asymptotic_pvalue("met", 2.0)
    assert chi2_2_quantile(0.05) == pytest.approx(5.9915, abs=1e-4)


@pytest.mark.parametrize(
    "kw",
    [{"B": 0}, {"alpha": 0.0}, {"alpha": 1.0}, {"lam": -1.0}, {"K": 0}, {"graph": "x"},
     {"statistic": "x"}, {"pvalue": "x"}, {"statistic": "met"}],
)
def test_config_validation(kw):
    with pytest.raises(ValueError):
        TestConfig(**kw)


def test_label_stream_is_chunk_addressable():
    full = random_label_matrix(12, 5, 3 * PERM_CHUNK, seed=9)
    tail = random_label_matrix(12, 5, PERM_CHUNK, seed=9, start=2 * PERM_CHUNK)
    assert np.array_equal(full[2 * PERM_CHUNK :], tail)
    assert np.all(full.sum(axis=1) == 5)
    with pytest.raises(ValueError):
        random_label_matrix(12, 5, 10, seed=9, start=3)


def test_permutation_pvalue_matches_exact_tail():
    rng = np.random.default_rng(21)
    g = random_graph(rng, 6, directed_density=0.4)
    lab = np.array([1, 1, 1, 2, 2, 2])
    nm = permutation_null_moments(g, 3)
    c = edge_counts(g, lab)
    s_obs = float(statistic_values("get", c.r1, c.r2, nm))
    all_s = []
    for xs in itertools.combinations(range(6), 3):
        lv = np.full(6, 2)
        lv[list(xs)] = 1
        cc = edge_counts(g, lv)
        all_s.append(float(statistic_values("get", cc.r1, cc.r2, nm)))
    tail = np.mean(np.array(all_s) >= s_obs - 1e-9 * max(1, s_obs))
    B = 100_000
    p = permutation_pvalue(g, lab, "get", B, seed=3)
    se = math.sqrt(tail * (1 - tail) / B)
    assert abs(p - (1 + B * tail) / (B + 1)) <= 3 * se


def test_permutation_pvalue_minimum_and_reproducibility():
    rng = np.random.default_rng(0)
    x = np.vstack([rng.normal(0, 1, (20, 5)), rng.normal(8, 1, (20, 5))])
    cfg = TestConfig(graph="knng", K=3, pvalue="permutation", B=199, seed=5)
    res = two_sample_test(x[:20], x[20:], cfg)
    assert res.pvalue == pytest.approx(1 / 200)
    again = two_sample_test(x[:20], x[20:], cfg)
    assert again.to_dict() == res.to_dict()


def test_permutation_pvalue_counts_ties(worked_graph):
    # S = 5 is attained by a third of all assignments
    p = permutation_pvalue(worked_graph, [1, 1, 2, 2], "get", 30_000, seed=1)
    assert p == pytest.approx(1 / 3, abs=3 * math.sqrt(2 / 9 / 30_000))


def test_permutation_pvalue_rejects_undefined_statistic():
    cyc = DirectedGraph.from_edges([(0, 1), (1, 2), (2, 0)])
    with pytest.raises(DegenerateCovariance):
        permutation_pvalue(cyc, [1, 2, 2], "get", 10)


def test_two_sample_result_fields():
    rng = np.random.default_rng(1)
    res = two_sample_test(rng.normal(size=(30, 4)), rng.normal(size=(25, 4)))
    d = res.to_dict()
    assert d["schema_version"] == SCHEMA_VERSION
    assert set(d) >= {"statistic", "components", "pvalue", "mode", "config", "graph_summary", "diagnostics"}
    assert d["components"]["R1"] + d["components"]["R2"] + d["components"]["Rb"] == 55 * 5
    assert 0 < d["pvalue"] <= 1
    assert d["pvalue"] == pytest.approx(math.exp(-d["statistic"] / 2))
    assert "lambda_validity" in d["diagnostics"]
    json.dumps(d)


@pytest.mark.parametrize("kind", ["get", "wet", "oet", "met"])
def test_all_statistics_run_in_permutation_mode(kind):
    rng = np.random.default_rng(2)
    cfg = TestConfig(statistic=kind, pvalue="permutation", B=99)
    res = two_sample_test(rng.normal(size=(20, 3)), rng.normal(0.3, size=(20, 3)), cfg)
    assert 1 / 100 <= res.pvalue <= 1


def test_degenerate_graph_is_a_failed_test():
    rng = np.random.default_rng(3)
    res = two_sample_test(rng.normal(size=(4, 2)), rng.normal(size=(4, 2)), TestConfig(graph="knng", K=7))
    assert res.failed and res.pvalue is None and not res.reject()
    assert "singular" in res.explanation
    assert res.to_dict()["diagnostics"]["degenerate_covariance"] is True


def test_two_sample_input_checks():
    with pytest.raises(ValueError):
        two_sample_test(np.zeros((1, 2)) + 1.0, np.ones((5, 2)))
    with pytest.raises(ValueError):
        two_sample_test(np.zeros((3, 2)), np.ones((5, 3)))


def test_graph_test_on_fixed_graph(worked_graph):
    res = graph_test(worked_graph, [1, 1, 2, 2], TestConfig(graph="knng"))
    assert res.statistic == pytest.approx(5.0)
    assert res.pvalue == pytest.approx(math.exp(-2.5))


def test_lambda_validity_examples():
    assert lambda_upper_bound(69, 5) == pytest.approx(0.303, abs=5e-4)
    assert lambda_upper_bound(68, 5) == pytest.approx(0.297, abs=5e-4)
    assert lambda_validity(69, 5, 0.3, 34.5, 34.5)["lambda_ok"]
    assert not lambda_validity(68, 5, 0.3, 34, 34)["lambda_ok"]
    assert not lambda_validity(100, 5, 0.0, 50, 50)["lambda_ok"]
    with pytest.raises(ValueError):
        lambda_validity(100, 5, 0.3, 10, 10)


def test_sample_size_balanced():
    rep = consistency_sample_size(5, 0.3, 0.05, ratio=1.0)
    assert rep.N == 69 and rep.feasible
    assert "lambda_upper_bound" in rep.binding
    assert rep.xi == pytest.approx(5.991464547107979)


@pytest.mark.parametrize("ratio", [2.0, 0.5])
def test_sample_size_two_to_one(ratio):
    rep = consistency_sample_size(5, 0.3, 0.05, ratio=ratio)
    assert rep.N == 214
    assert rep.binding == ["case3" if ratio == 2.0 else "case2"]


def test_sample_size_conditions_hold_at_the_answer():
    rep = consistency_sample_size(5, 0.3, 0.05, ratio=1.0)
    v = lambda_validity(rep.N, 5, 0.3, rep.N / 2, rep.N / 2)
    assert v["valid"]
    assert not lambda_validity(rep.N - 1, 5, 0.3, (rep.N - 1) / 2, (rep.N - 1) / 2)["valid"]


def test_sample_size_with_spread_parameters_selects_one_case():
    rep = consistency_sample_size(5, 0.3, 0.05, ratio=2.0, sigma1_sq=1.0, sigma2_sq=1.0, v_sq=0.5)
    assert set(rep.per_condition) == {"case1", "lambda_upper_bound", "min_size"}
    with pytest.raises(ValueError):
        consistency_sample_size(5, 0.0)


def test_two_sample_accepts_datasets():
    rng = np.random.default_rng(4)
    a = two_sample_test(Dataset(rng.normal(size=(15, 2))), Dataset(rng.normal(size=(15, 2))))
    assert a.graph_summary["N"] == 30
