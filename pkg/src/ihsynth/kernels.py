"""Kernel selection.

The compiled extension is used when it imports; otherwise the numpy
implementation is used.  Set ``IHSYNTH_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _fallback

BACKEND = "python"

if os.environ.get("IHSYNTH_PURE_PYTHON", "") not in ("", "0"):
    from ._fallback import grid_query, rigid_grid_query, signed_distance, unsigned_distance
else:
    try:
        from ._kernels import grid_query, rigid_grid_query, signed_distance, unsigned_distance

        BACKEND = "cython"
    except ImportError:  # extension not built
        from ._fallback import grid_query, rigid_grid_query, signed_distance, unsigned_distance

fallback = _fallback

__all__ = ["BACKEND", "fallback", "grid_query", "rigid_grid_query", "signed_distance", "unsigned_distance"]
