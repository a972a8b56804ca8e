"""Optional numba acceleration.

Hot loops are written once in a numba-compatible subset of Python. When numba
is importable and ``ECG_IDENT_NUMBA`` is not set to ``0``, they are compiled
with ``njit``; otherwise callers fall back to the pure-numpy implementations.
"""
import os
import warnings

_FLAG = os.environ.get("ECG_IDENT_NUMBA", "1").strip().lower()

try:
    from numba import njit as _numba_njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False
    _numba_njit = None

USE_NUMBA = HAVE_NUMBA and _FLAG not in ("0", "false", "no", "off")

if _FLAG not in ("0", "false", "no", "off") and not HAVE_NUMBA:  # pragma: no cover
    warnings.warn("numba not importable; using the pure-numpy kernels")


def njit(*args, **kwargs):
    """``numba.njit`` when numba is available, identity decorator otherwise.

    Compilation happens even with ``ECG_IDENT_NUMBA=0`` so that the benchmark
    can compare both paths in one process; dispatch is decided by callers via
    :data:`USE_NUMBA`.
    """
    if HAVE_NUMBA:
        return _numba_njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda func: func
