"""Backend selection for the hot kernels.

Set ``NSFP_BACKEND=numpy`` to force the pure-numpy code paths. The default is
numba when it imports cleanly.
"""

import os

_requested = os.environ.get("NSFP_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ValueError(f"NSFP_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

# The TBB layer probes and warns on older TBB installs; workqueue is always there.
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

try:
    import numba as _numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - depends on environment
    _numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _requested == "numba"
BACKEND = "numba" if USE_NUMBA else "numpy"


def njit(*args, **kwargs):
    """``numba.njit`` when available, identity decorator otherwise."""
    if HAVE_NUMBA:
        return _numba.njit(*args, **kwargs)

    def wrap(fn):
        return fn

    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return wrap


if HAVE_NUMBA:
    prange = _numba.prange
else:  # pragma: no cover
    prange = range
