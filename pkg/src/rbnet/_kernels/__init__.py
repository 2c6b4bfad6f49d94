"""Kernel backend selection.

The compiled extension is preferred when it was built; otherwise the numpy
fallback is used. Set RBNET_BACKEND=python or RBNET_BACKEND=compiled to force
one (forcing "compiled" raises if the extension is missing).
"""

import os

_requested = os.environ.get("RBNET_BACKEND", "").strip().lower()
if _requested not in ("", "compiled", "python"):
    raise ImportError(f"RBNET_BACKEND must be 'compiled' or 'python', got {_requested!r}")

if _requested == "python":
    from . import fallback as _impl
    BACKEND = "python"
else:
    try:
        from . import _core as _impl
        BACKEND = "compiled"
    except ImportError:
        if _requested == "compiled":
            raise
        from . import fallback as _impl
        BACKEND = "python"

newton_solve = _impl.newton_solve
newton_solve_batch = _impl.newton_solve_batch
kkt_solve_batch = _impl.kkt_solve_batch


def backend_name() -> str:
    """Name of the active kernel backend ("compiled" or "python")."""
    return BACKEND
