"""Optional numba acceleration.

Hot kernels come in two flavours: a loop-style version compiled with
``numba.njit`` and a vectorised numpy version.  Which one runs is decided
once at import time.  Set ``VOLPRES_DISABLE_NUMBA=1`` to force the numpy
path (numba is also skipped when it cannot be imported).
"""
import os
from warnings import warn

_FLAG = "VOLPRES_DISABLE_NUMBA"

try:
    import numba as _nb
except ImportError:  # pragma: no cover - numba is a soft dependency
    _nb = None

USE_NUMBA = _nb is not None and os.environ.get(_FLAG, "").strip().lower() not in ("1", "true", "yes")

if _nb is None and os.environ.get(_FLAG) is None:  # pragma: no cover
    warn("numba not found; volpres falls back to the numpy kernels")


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, identity otherwise.

    The decorated function is always compiled lazily, so kernels that are
    only used on the numba path cost nothing when the flag is off.
    """
    if _nb is None:
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f
    kwargs.setdefault("cache", True)
    return _nb.njit(*args, **kwargs)


def backend():
    return "numba" if USE_NUMBA else "numpy"


def pick(numba_impl, numpy_impl, use_numba=None):
    """Return the kernel for the requested (or active) backend."""
    if use_numba is None:
        use_numba = USE_NUMBA
    if use_numba and _nb is None:
        raise RuntimeError("numba backend requested but numba is not installed")
    return numba_impl if use_numba else numpy_impl
