"""Numba switch. Set ``LE2_DISABLE_NUMBA=1`` to run the pure-numpy kernels."""

import os

_disabled = os.environ.get("LE2_DISABLE_NUMBA", "0").strip().lower() in ("1", "true", "yes", "on")

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

USE_NUMBA = numba is not None and not _disabled


def njit(func):
    """``numba.njit(cache=True)`` when numba is importable, else identity."""
    if numba is None:  # pragma: no cover
        return func
    return numba.njit(cache=True)(func)
