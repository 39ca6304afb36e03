"""Numba toggle.

Every hot kernel in :mod:`jordan_source.kernels` exists twice: a loop version
compiled with ``numba.njit`` and a vectorised numpy version. The public
dispatchers pick one at import time; set ``JORDAN_SOURCE_NUMBA=0`` to force
the numpy path. Both variants stay importable so the benchmark and the
parity tests can compare them in one process.
"""

import os

try:
    import numba as _numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - depends on environment
    _numba = None
    HAVE_NUMBA = False

_flag = os.environ.get("JORDAN_SOURCE_NUMBA", "1").strip().lower()
USE_NUMBA = HAVE_NUMBA and _flag not in ("0", "false", "no", "off")


def njit(*args, **kwargs):
    """``numba.njit(cache=True)`` when numba is installed, else a no-op."""
    if _numba is None:
        if args and callable(args[0]):
            return args[0]
        return lambda fn: fn
    kwargs.setdefault("cache", True)
    return _numba.njit(*args, **kwargs)
