"""Numerical kernel backend selection.

The hot inner loops (player objective evaluation, feasible-set projections,
the projected-gradient solve) exist twice: a compiled Cython core and a
pure-NumPy fallback with identical semantics.  The compiled core is used
when importable; set ``COGNEQ_BACKEND=python`` or ``compiled`` to force one.
"""

import os

from . import py_backend
from .py_backend import PFA_GUARD, PlayerData


def _select():
    choice = os.environ.get("COGNEQ_BACKEND", "auto").lower()
    if choice == "python":
        return py_backend
    try:
        from . import core
    except ImportError:
        if choice == "compiled":
            raise ImportError(
                "COGNEQ_BACKEND=compiled but the extension is not built; "
                "run `pip install -e . --no-build-isolation`"
            )
        return py_backend
    return core


K = _select()
BACKEND_NAME = K.NAME


def get_backend(name):
    """Fetch a backend by name ('python' or 'compiled'), for benchmarks/tests."""
    if name == "python":
        return py_backend
    from . import core
    return core
