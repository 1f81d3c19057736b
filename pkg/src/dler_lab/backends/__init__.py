"""Kernel backend selection.

Two interchangeable implementations of the hot loops (autoregressive token
sampling and gradient scatter-accumulation):

  * ``numba``: @njit compiled loops (default when numba imports cleanly)
  * ``numpy``: vectorized lockstep fallback

Selected via the ``DLER_BACKEND`` environment variable at import time.
Both backends consume the same precomputed row tables and counter-based
RNG streams, so they produce bitwise-identical tokens, log-probs, and
gradients; the choice only affects speed.
"""

import os

from dler_lab.backends import _numpy as _np_impl

_requested = os.environ.get("DLER_BACKEND", "").strip().lower()

if _requested not in ("", "numba", "numpy"):
    raise RuntimeError(
        f"DLER_BACKEND={_requested!r} not recognized; use 'numba' or 'numpy'"
    )

if _requested == "numpy":
    _impl = _np_impl
    BACKEND = "numpy"
else:
    try:
        from dler_lab.backends import _numba as _nb_impl

        _impl = _nb_impl
        BACKEND = "numba"
    except ImportError:
        if _requested == "numba":
            raise
        _impl = _np_impl
        BACKEND = "numpy"

sample_tokens = _impl.sample_tokens
scatter_grad = _impl.scatter_grad

__all__ = ["BACKEND", "sample_tokens", "scatter_grad"]
