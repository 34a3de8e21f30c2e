import os
import subprocess
import sys

import numpy as np
import pytest

from robustgraph import _backend, _pykernels


def _probe(env_extra):
    env = {**os.environ, **env_extra}
    code = "from robustgraph import _backend; print(_backend.BACKEND)"
    return subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True).stdout.strip()


def test_pure_flag_forces_python_kernels():
    assert _probe({"ROBUSTGRAPH_PURE": "1"}) == "python"


def test_default_prefers_compiled_kernels():
    expected = "cython" if _backend.BACKEND == "cython" else "python"
    assert _probe({"ROBUSTGRAPH_PURE": ""}) == expected


def test_named_backend_lookup():
    assert _backend.get("python") is _pykernels
    with pytest.raises(ValueError):
        _backend.get("fortran")


@pytest.mark.parametrize("seed", range(4))
def test_prefix_counts_agree(seed):
    if _backend.BACKEND != "cython":
        pytest.skip("compiled kernels not built")
    rng = np.random.default_rng(seed)
    N = 25
    ea = rng.integers(0, N, 80).astype(np.int64)
    eb = (ea + rng.integers(1, N, 80)) % N
    pos = np.ascontiguousarray(np.stack([rng.permutation(N) for _ in range(7)]).astype(np.int64))
    a = _pykernels.prefix_counts(ea, eb, pos)
    b = _backend.get("cython").prefix_counts(ea, eb, pos)
    for u, v in zip(a, b):
        assert np.array_equal(np.asarray(u), np.asarray(v))
