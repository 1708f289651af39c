"""Numba switch.

Set ``UNITQA_PURE_NUMPY=1`` to force the numpy implementations of every hot
kernel (useful for debugging, coverage and for platforms without numba).
"""

import os

_FLAG = os.environ.get("UNITQA_PURE_NUMPY", "").strip().lower()

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and _FLAG not in ("1", "true", "yes", "on")


def njit(func):
    """``numba.njit(cache=True)`` when numba is importable, identity otherwise."""
    if not HAVE_NUMBA:
        return func
    return numba.njit(cache=True, nogil=True)(func)
