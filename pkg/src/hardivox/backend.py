"""Backend selection for the hot numeric kernels.

Two interchangeable implementations exist: numba-jitted loops in
:mod:`hardivox._impl_numba` and vectorized numpy in
:mod:`hardivox._impl_numpy`. The HARDIVOX_BACKEND environment variable picks
one at import time:

    auto   use numba when importable, else numpy (default)
    numba  require numba, raise if unavailable
    numpy  force the pure-numpy path

``active_backend()`` reports which one won.
"""

import os

from .errors import ValidationError

from . import _impl_numpy

_HAS_NUMBA = False
try:
    from . import _impl_numba

    _HAS_NUMBA = True
except ImportError:
    _impl_numba = None

_CHOICE = os.environ.get("HARDIVOX_BACKEND", "auto").strip().lower()
if _CHOICE not in ("auto", "numba", "numpy"):
    raise ValidationError(
        f"HARDIVOX_BACKEND must be auto, numba, or numpy, got {_CHOICE!r}"
    )
if _CHOICE == "numba" and not _HAS_NUMBA:
    raise ImportError("HARDIVOX_BACKEND=numba but numba is not importable")

if _CHOICE == "numpy" or (_CHOICE == "auto" and not _HAS_NUMBA):
    _impl = _impl_numpy
    _NAME = "numpy"
else:
    _impl = _impl_numba
    _NAME = "numba"

conv_planes = _impl.conv_planes
rbf_kernel = _impl.rbf_kernel
smo_solve_cached = _impl.smo_solve_cached
smo_solve_rows = _impl.smo_solve_rows
decision_values = _impl.decision_values


def active_backend() -> str:
    """Name of the implementation in use, "numba" or "numpy"."""
    return _NAME
