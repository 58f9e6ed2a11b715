"""Segment-reduction kernels with a compiled core and a numpy fallback.

The compiled extension is preferred; set DAGCN_NO_EXT=1 (or call
``set_backend("numpy")``) to force the fallback. Both backends produce
bitwise-identical results; the extension is just faster on large edge lists.
"""

import os

import numpy as np

from . import _fallback

_backends = {"numpy": _fallback}
try:
    from . import _speedups

    _backends["cython"] = _speedups
except ImportError:  # pragma: no cover - depends on the build
    pass

BACKEND = "numpy"
_active = _fallback


def set_backend(name: str) -> None:
    """Select the kernel backend ("cython" or "numpy")."""
    global BACKEND, _active
    if name not in _backends:
        raise ValueError(f"unknown kernel backend {name!r}; have {sorted(_backends)}")
    BACKEND = name
    _active = _backends[name]


def available_backends():
    return sorted(_backends)


def _as_f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def _as_i64(a):
    return np.ascontiguousarray(a, dtype=np.int64)


def segment_sum(values, segments, n_segments):
    """Sum rows of ``values`` (E, D) into ``n_segments`` buckets."""
    return _active.segment_sum(_as_f64(values), _as_i64(segments), int(n_segments))


def segment_sum_1d(values, segments, n_segments):
    return _active.segment_sum_1d(_as_f64(values), _as_i64(segments), int(n_segments))


def segment_max(values, segments, n_segments):
    """Columnwise per-segment max plus the source row of each maximum."""
    return _active.segment_max(_as_f64(values), _as_i64(segments), int(n_segments))


if os.environ.get("DAGCN_NO_EXT"):
    set_backend("numpy")
elif "cython" in _backends:
    set_backend("cython")
