"""Numba dispatch for the hot kernels.

Every accelerated kernel exists twice: a loop-style version compiled with
``numba.njit`` and a vectorised numpy version. ``STOCHFRAC_NUMBA=0`` in the
environment (or numba being absent) selects the numpy path at import time.
"""

from __future__ import annotations

import os

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

_flag = os.environ.get("STOCHFRAC_NUMBA", "1").strip().lower()
USE_NUMBA = HAVE_NUMBA and _flag not in ("0", "false", "off", "no")


def njit(func):
    """Compile ``func`` with numba when available, else return it unchanged."""
    if HAVE_NUMBA:
        return numba.njit(cache=True, fastmath=False)(func)
    return func


def select(numba_impl, numpy_impl):
    return numba_impl if USE_NUMBA else numpy_impl
