"""Numba acceleration switch.

Hot kernels in this package come in two flavours: a numba ``@njit`` loop and a
pure-numpy vectorized twin.  The njit flavour is used when numba imports and
the environment variable ``ACCRETEFLOW_DISABLE_NUMBA`` is unset (or falsy);
otherwise the numpy twin is selected.  ``benchmarks/kernel_bench.py`` compares
the two paths.
"""

import os

_flag = os.environ.get("ACCRETEFLOW_DISABLE_NUMBA", "").strip().lower()
NUMBA_DISABLED = _flag in ("1", "true", "yes", "on")

if not NUMBA_DISABLED:
    # prefer the OpenMP layer; the TBB one warns on older TBB builds
    os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")
    try:
        from numba import njit, prange

        HAVE_NUMBA = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        HAVE_NUMBA = False
else:
    HAVE_NUMBA = False

if not HAVE_NUMBA:
    # Identity decorator so the njit twins still import; they are only called
    # through the dispatch table, which points at the numpy twins instead.
    def njit(*args, **kwargs):  # noqa: D103
        if args and callable(args[0]):
            return args[0]

        def wrap(func):
            return func

        return wrap

    prange = range
