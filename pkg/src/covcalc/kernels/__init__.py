"""Hot numeric kernels with selectable backend.

Set ``COVCALC_BACKEND=numpy`` to force the pure-numpy implementations,
``COVCALC_BACKEND=numba`` to require the JIT versions, or leave unset
(``auto``) to use numba when it is importable.  Both backends implement
the same functions and agree to floating-point roundoff; results do not
depend on thread count.
"""

import os

from . import fallback

_requested = os.environ.get("COVCALC_BACKEND", "auto").lower()

if _requested not in ("auto", "numba", "numpy"):
    raise RuntimeError(
        f"COVCALC_BACKEND must be 'auto', 'numba', or 'numpy', got '{_requested}'"
    )

if _requested == "numpy":
    _impl = fallback
    BACKEND = "numpy"
else:
    try:
        from . import fast as _impl
        BACKEND = "numba"
    except ImportError:
        if _requested == "numba":
            raise
        _impl = fallback
        BACKEND = "numpy"

diff_axis = _impl.diff_axis
christoffel_core = _impl.christoffel_core


def backend():
    """Name of the active kernel backend."""
    return BACKEND
