"""Backend switch for the compiled kernels.

Set ``INVSTATS_DISABLE_NUMBA=1`` before import to route every hot kernel
through its pure-numpy fallback. Both paths produce identical results up to
floating point summation order.
"""

import os

_FLAG = os.environ.get("INVSTATS_DISABLE_NUMBA", "").strip().lower()

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

USE_NUMBA = numba is not None and _FLAG not in ("1", "true", "yes", "on")


def njit(*args, **kwargs):
    """``numba.njit`` when numba is usable, identity otherwise."""
    if numba is None:
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f
    return numba.njit(*args, cache=True, **kwargs)


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
