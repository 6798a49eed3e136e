"""Optional numba acceleration.

Set ``KKPERTURB_DISABLE_NUMBA=1`` to run every kernel as plain numpy code.
"""
import os

_DISABLED = os.environ.get("KKPERTURB_DISABLE_NUMBA", "0").lower() in ("1", "true", "yes")

try:
    if _DISABLED:
        raise ImportError
    from numba import njit as _njit

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False


def maybe_jit(func):
    """Compile ``func`` with numba when available; keep the python original as ``func.py_func``."""
    if not HAS_NUMBA:
        func.py_func = func
        return func
    return _njit(cache=True, nogil=True)(func)
