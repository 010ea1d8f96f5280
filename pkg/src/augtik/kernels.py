"""Backend selection for the hot kernels.

The compiled extension ``augtik._ckernels`` is used when it imports; otherwise
the NumPy/SciPy implementations in ``augtik._pykernels`` are used. Setting the
environment variable ``AUGTIK_PURE_PYTHON=1`` forces the fallback.
"""

import os

from . import _pykernels
from ._pykernels import A_0, A_A, A_B, I_MINUS, I_PLUS  # noqa: F401

_impl = _pykernels
BACKEND = "python"

if os.environ.get("AUGTIK_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        pass

ptfactor = _impl.ptfactor
ptsolve = _impl.ptsolve
classify = _impl.classify
kkt_tridiag_solve = _impl.kkt_tridiag_solve
prox_gradient_1d = _impl.prox_gradient_1d
# the generic loop takes an arbitrary solve callable and has no compiled twin
prox_gradient = _pykernels.prox_gradient


def available_backends():
    """Names of importable backends, fallback first."""
    names = ["python"]
    try:
        from . import _ckernels  # noqa: F401

        names.append("cython")
    except ImportError:
        pass
    return names


def get_backend(name):
    """Return the kernel module for ``name`` ("python" or "cython")."""
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")
