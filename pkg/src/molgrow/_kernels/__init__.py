"""Numeric hot kernels with a compiled core and a pure-numpy fallback.

The compiled module (_native, built from _native.pyx) is preferred when it
imported cleanly. Set MOLGROW_KERNELS=fallback to force the numpy paths, or
MOLGROW_KERNELS=native to fail loudly when the extension is missing.
"""

from __future__ import annotations

import os

from . import numpy_impl

_impl = numpy_impl
_backend = "fallback"

_requested = os.environ.get("MOLGROW_KERNELS", "auto")
if _requested not in ("auto", "native", "fallback"):
    raise ValueError(f"MOLGROW_KERNELS must be auto, native or fallback, got {_requested!r}")

if _requested != "fallback":
    try:
        from . import _native  # type: ignore[attr-defined]

        _impl = _native
        _backend = "native"
    except ImportError:
        if _requested == "native":
            raise

segment_sum = _impl.segment_sum
segment_max = _impl.segment_max
smooth_displacements = _impl.smooth_displacements
min_dist = _impl.min_dist
triplet_features = _impl.triplet_features

# scalar helpers stay numpy-only; they are not hot
NF_PER_RBF = numpy_impl.NF_PER_RBF
cutoff_window = numpy_impl.cutoff_window
proximity_weight = numpy_impl.proximity_weight


def backend() -> str:
    """Name of the active kernel backend: 'native' or 'fallback'."""
    return _backend
