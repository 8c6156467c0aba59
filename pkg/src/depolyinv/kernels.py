"""Backend selection for the hot loops.

The compiled extension is used when it imports; otherwise the NumPy
fallback is used. Setting ``DEPOLYINV_PURE_PYTHON=1`` forces the fallback.
"""

import os

from . import _fallback

if os.environ.get("DEPOLYINV_PURE_PYTHON", "") not in ("", "0"):
    _compiled = None
else:
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None

BACKEND = "compiled" if _compiled is not None else "python"

if _compiled is not None:
    bd_run = _compiled.bd_run
    stencil_run = _compiled.stencil_run
else:
    bd_run = _fallback.bd_run
    stencil_run = _fallback.stencil_run

__all__ = ["BACKEND", "bd_run", "stencil_run"]
