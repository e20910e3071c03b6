"""JIT switch. Set ``MDFL_DISABLE_JIT=1`` to force the pure-numpy kernels."""

import os

JIT_DISABLED = os.environ.get("MDFL_DISABLE_JIT", "").strip().lower() in ("1", "true", "yes", "on")

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

HAVE_NUMBA = numba is not None
USE_JIT = HAVE_NUMBA and not JIT_DISABLED


def jit(func):
    """Compile ``func`` with numba (nopython, nogil, cached) when available."""
    if not HAVE_NUMBA:
        return None
    return numba.njit(cache=True, nogil=True)(func)
