"""Backend selection for the hot voxel kernels.

Kernels exist twice: a numba ``@njit`` version and a vectorized numpy
version.  Numba is used when it imports and ``ECRSEG_NO_NUMBA`` is unset
(or ``0``).  Outputs never depend on the worker count.
"""
from __future__ import annotations

import os

_flag = os.environ.get("ECRSEG_NO_NUMBA", "").strip().lower()
_disabled = _flag not in ("", "0", "false", "no")

try:
    if _disabled:
        raise ImportError("numba disabled by ECRSEG_NO_NUMBA")
    import numba
    from numba import njit, prange

    if "NUMBA_THREADING_LAYER" not in os.environ:
        numba.config.THREADING_LAYER = "workqueue"

    NUMBA_OK = True
except ImportError:
    numba = None
    NUMBA_OK = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f

    prange = range

BACKEND = "numba" if NUMBA_OK else "numpy"

_threads: int | None = None


def resolve_backend(backend: str | None) -> str:
    if backend is None:
        return BACKEND
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "numba" and not NUMBA_OK:
        raise RuntimeError("numba backend requested but numba is unavailable")
    return backend


def set_threads(n: int | None) -> int:
    """Cap worker threads for both backends; returns the effective count."""
    global _threads
    if n is None:
        n = os.cpu_count() or 1
    n = max(1, int(n))
    _threads = n
    if NUMBA_OK:
        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
    return n


def get_threads() -> int:
    if _threads is not None:
        return _threads
    return os.cpu_count() or 1
