"""Kernel backend selection.

The compiled extension is used when it imports cleanly; otherwise, or when
``DETSKETCH_PURE_PYTHON=1`` is set, the numpy fallback is used. ``BACKEND``
names the active choice. Lower medians always come from numpy.
"""

import os

from . import _kernels_py

if os.environ.get("DETSKETCH_PURE_PYTHON") == "1":
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

accumulate = _impl.accumulate
# numpy's vectorised selection beats nth_element at every width we measured
# (benchmarks/bench_kernels.py), so both backends use it
gather_median = _kernels_py.gather_median
two_layer_scatter = _impl.two_layer_scatter
two_layer_bucket_counts = _impl.two_layer_bucket_counts
two_layer_pair_bits = _impl.two_layer_pair_bits
block_sign_scatter = _impl.block_sign_scatter
rs_scatter = _impl.rs_scatter


def available_backends():
    """Return ``{name: module}`` for every backend importable here."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels
        out["cython"] = _kernels
    except ImportError:
        pass
    return out
