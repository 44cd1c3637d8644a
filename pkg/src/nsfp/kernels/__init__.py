"""Hot numeric kernels, each with a numba and a pure-numpy implementation.

The public names below are bound to one backend at import time according to
``NSFP_BACKEND`` (see :mod:`nsfp._accel`). Both variants stay importable so
tests and the benchmark can compare them directly.
"""

from .._accel import BACKEND, USE_NUMBA
from .philox import normals_numba, normals_numpy, philox4x32_numpy
from .stencil import correlate_axis_numba, correlate_axis_numpy
from .triads import triad_sum_numba, triad_sum_numpy

if USE_NUMBA:
    normals = normals_numba
    triad_sum = triad_sum_numba
    correlate_axis = correlate_axis_numba
else:
    normals = normals_numpy
    triad_sum = triad_sum_numpy
    correlate_axis = correlate_axis_numpy

__all__ = [
    "BACKEND",
    "normals",
    "triad_sum",
    "correlate_axis",
    "normals_numba",
    "normals_numpy",
    "philox4x32_numpy",
    "triad_sum_numba",
    "triad_sum_numpy",
    "correlate_axis_numba",
    "correlate_axis_numpy",
]
