"""Kernel dispatch: the compiled extension when it imports, numpy otherwise.

Set ``HOPFLINK_PURE_PYTHON=1`` before import to force the numpy path.
"""
import os

from . import _fallback

BACKEND = "python"
if os.environ.get("HOPFLINK_PURE_PYTHON", "") != "1":
    try:
        from . import _kernels as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _fallback
else:
    _impl = _fallback

tet_zero_segments = _impl.tet_zero_segments
signed_crossings = _impl.signed_crossings
gauss_pair_sum = _impl.gauss_pair_sum

IMPLEMENTATIONS = {"python": _fallback}
if BACKEND == "cython":
    IMPLEMENTATIONS["cython"] = _impl
