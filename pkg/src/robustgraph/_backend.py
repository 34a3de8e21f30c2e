"""Pick the compiled kernels when available, else the numpy ones.

Set ``ROBUSTGRAPH_PURE=1`` to force the pure-Python path.
"""

from __future__ import annotations

import os

from . import _pykernels

BACKEND = "python"
kernels = _pykernels

if os.environ.get("ROBUSTGRAPH_PURE", "") != "1":
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        kernels = _ckernels
        BACKEND = "cython"


def get(name: str):
    """Kernel ``name`` from a named backend (``"python"`` or ``"cython"``)."""
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown backend {name!r}")
