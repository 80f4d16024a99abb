"""Backend selection for the cell kernels.

The compiled extension is used when it imports; otherwise the numpy
implementation takes over.  Setting ``SHELLSYM_PURE_PYTHON=1`` forces the
fallback, which is how the benchmark and the parity tests reach it.
"""
from __future__ import annotations

import os

from . import _pykernels

try:
    from . import _ckernels as _compiled
except ImportError:  # extension not built
    _compiled = None

if _compiled is not None and os.environ.get("SHELLSYM_PURE_PYTHON", "") not in ("1", "true", "yes"):
    energy_grad = _compiled.energy_grad
    mass_grad = _compiled.mass_grad
    BACKEND = "compiled"
else:
    energy_grad = _pykernels.energy_grad
    mass_grad = _pykernels.mass_grad
    BACKEND = "python"


def compiled_available() -> bool:
    return _compiled is not None
