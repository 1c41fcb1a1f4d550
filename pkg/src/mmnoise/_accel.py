"""Numba availability and the environment switch that disables it.

Set ``MMNOISE_DISABLE_NUMBA=1`` to force the pure-numpy kernels. The flag is
read once at import time.
"""

import os

_FLAG = os.environ.get("MMNOISE_DISABLE_NUMBA", "").strip().lower()
DISABLED_BY_ENV = _FLAG not in ("", "0", "false", "no", "off")

if DISABLED_BY_ENV:
    numba = None
else:
    try:
        import numba
    except ImportError:  # pragma: no cover - numba is a declared dependency
        numba = None

HAVE_NUMBA = numba is not None


def njit(*args, **kwargs):
    """``numba.njit`` when enabled; otherwise returns the function untouched."""
    if HAVE_NUMBA:
        return numba.njit(*args, **kwargs)
    if args and callable(args[0]) and len(args) == 1 and not kwargs:
        return args[0]
    return lambda fn: fn
