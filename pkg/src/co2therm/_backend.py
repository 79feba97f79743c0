"""Kernel backend selection.

The compiled extension is used when importable; otherwise the NumPy
fallback takes over transparently.  Set ``CO2THERM_BACKEND=python`` to force
the fallback (e.g. for the backend benchmark) or ``CO2THERM_BACKEND=compiled``
to fail loudly when the extension is missing.
"""

from __future__ import annotations

import os

from . import _kernels_py

_requested = os.environ.get("CO2THERM_BACKEND", "").strip().lower()

try:
    from . import _speedups as _ext
except ImportError:
    _ext = None

if _requested in ("python", "numpy", "py"):
    _ext = None
elif _requested in ("compiled", "c", "cython") and _ext is None:
    raise ImportError(
        "CO2THERM_BACKEND=compiled requested but the co2therm._speedups "
        "extension is not built; run `pip install -e .`")
elif _requested not in ("", "compiled", "c", "cython"):
    raise ImportError(f"unknown CO2THERM_BACKEND value: {_requested!r}")

BACKEND = "compiled" if _ext is not None else "python"

simulate_coupled = _ext.simulate_coupled if _ext is not None else _kernels_py.simulate_coupled
chol_rank1_update = (_ext.chol_rank1_update if _ext is not None
                     else _kernels_py.chol_rank1_update)


def backend_name() -> str:
    """Active kernel backend: ``"compiled"`` or ``"python"``."""
    return BACKEND
