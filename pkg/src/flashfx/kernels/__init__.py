"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The backend is picked once at import time from ``FLASHFX_BACKEND``:
``numba`` (default when importable) compiles the scalar loops in
``_loops``; ``numpy`` uses the vectorized implementations in
``_vectorized`` and runs the streaming scans as plain Python.
"""

from __future__ import annotations

import logging
import os

import numpy as np

from . import _loops, _vectorized
from ._loops import CROSSED, EMPTY, LOCKED, N_VENUES, NORMAL, ONE_SIDED

logger = logging.getLogger(__name__)

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

_requested = os.environ.get("FLASHFX_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ValueError(f"FLASHFX_BACKEND must be 'numba' or 'numpy', got {_requested!r}")
if _requested == "numba" and numba is None:
    logger.warning("numba unavailable, falling back to numpy kernels")
    _requested = "numpy"
BACKEND = _requested

if BACKEND == "numba":
    _nbbo_scan = numba.njit(cache=True, nogil=True)(_loops.nbbo_scan)
    _detect_scan = numba.njit(cache=True, nogil=True)(_loops.detect_scan)
else:
    _nbbo_scan = _vectorized.nbbo_scan
    _detect_scan = _loops.detect_scan

__all__ = [
    "BACKEND", "NORMAL", "LOCKED", "CROSSED", "ONE_SIDED", "EMPTY", "N_VENUES",
    "new_book", "nbbo_scan", "detect_scan", "detect_runs",
]


def new_book():
    """Fresh carried state for :func:`nbbo_scan`: (book, last NBBO)."""
    last = np.zeros(5, np.int64)
    last[4] = EMPTY
    return np.zeros((4, N_VENUES), np.int64), last


def nbbo_scan(exch, bid, bsz, off, osz, book=None, last=None):
    if book is None:
        book, last = new_book()
    return _nbbo_scan(np.ascontiguousarray(exch, np.int64), np.ascontiguousarray(bid, np.int64),
                      np.ascontiguousarray(bsz, np.int64), np.ascontiguousarray(off, np.int64),
                      np.ascontiguousarray(osz, np.int64), book, last)


def new_detect_state():
    return np.zeros(5, np.int64)


def detect_scan(ts, px, sign, min_ticks, max_window, move_num, move_den, j0, state, final):
    return _detect_scan(np.ascontiguousarray(ts, np.int64), np.ascontiguousarray(px, np.int64),
                        int(sign), int(min_ticks), int(max_window), int(move_num), int(move_den),
                        int(j0), state, bool(final))


def detect_runs(ts, px, sign, min_ticks, max_window, move_num, move_den):
    """Crash runs over a complete single-venue trade sequence.

    Returns ``(start, end, ticks, truncated)`` arrays of trade indices.
    """
    ts = np.ascontiguousarray(ts, np.int64)
    px = np.ascontiguousarray(px, np.int64)
    if BACKEND == "numba":
        return detect_scan(ts, px, sign, min_ticks, max_window, move_num, move_den,
                           0, new_detect_state(), True)
    return _vectorized.detect_runs(ts, px, int(sign), int(min_ticks), int(max_window),
                                   int(move_num), int(move_den))
