"""Hot numeric kernels.

The numba backend is used when numba imports cleanly. Set
``CVARSYNTH_BACKEND=numpy`` to force the pure-numpy path (useful for
debugging and for the backend comparison in ``benchmarks/``).
"""
import os

from . import numpy_impl

_requested = os.environ.get("CVARSYNTH_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ImportError(f"CVARSYNTH_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

_impl = numpy_impl
if _requested == "numba":
    try:
        from . import numba_impl as _impl
    except ImportError:  # numba missing or broken: stay on numpy
        _impl = numpy_impl

BACKEND = "numba" if _impl is not numpy_impl else "numpy"

block_toeplitz = _impl.block_toeplitz
kappa_inverse_batch = _impl.kappa_inverse_batch
proxy_oracle = _impl.proxy_oracle
simulate = _impl.simulate


def set_threads(n):
    """Cap the worker threads used by parallel kernels (no-op on numpy)."""
    if BACKEND == "numba" and n:
        import numba

        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))


__all__ = ["BACKEND", "block_toeplitz", "kappa_inverse_batch", "proxy_oracle", "simulate",
           "set_threads", "numpy_impl"]
