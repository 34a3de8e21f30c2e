"""Hub-penalized nearest-neighbor graphs and graph-based two-sample tests."""

from ._backend import BACKEND
from .data import Dataset, load_dataset, neighbor_ranks, pairwise_distances
from .graphs import (
    DirectedGraph,
    build_kmst,
    build_knng,
    build_krnng,
    condition_diagnostics,
    graph_stats,
    objective_value,
)
from .edgecount import (
    DegenerateCovariance,
    LabelVector,
    edge_counts,
    enumerate_null,
    get_statistic,
    met_statistic,
    oet_statistic,
    permutation_null_moments,
    zw_zd,
)
from .inference import TestConfig, TestResult, consistency_sample_size, graph_test, two_sample_test
from .changepoint import ScanConfig, ScanResult, scan

__version__ = "0.1.0"
