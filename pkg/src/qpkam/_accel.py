"""Backend selection for the hot kernels.

Set ``QPKAM_BACKEND=numpy`` to force the vectorised numpy path; the default
is ``numba`` whenever numba imports cleanly.
"""
import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

_requested = os.environ.get("QPKAM_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ValueError(f"QPKAM_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

USE_NUMBA = _requested == "numba" and numba is not None
BACKEND = "numba" if USE_NUMBA else "numpy"


def njit(func):
    """Compile ``func`` with numba when available, otherwise return it as is."""
    if numba is None:
        return func
    return numba.njit(cache=True)(func)


def pick(numba_impl, numpy_impl):
    return numba_impl if USE_NUMBA else numpy_impl
