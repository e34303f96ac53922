"""Kernel backend selection.

The compiled ``_core`` extension is used when it imports; otherwise the numpy
implementation in ``_fallback``. Setting ``SSMC_PURE_PYTHON=1`` forces the
fallback.
"""
import os

if os.environ.get("SSMC_PURE_PYTHON", "") not in ("", "0"):
    from . import _fallback as _impl
    BACKEND = "python"
else:
    try:
        from . import _core as _impl
        BACKEND = "cython"
    except ImportError:  # extension not built
        from . import _fallback as _impl
        BACKEND = "python"

PROX_SHRINK = 0
PROX_BALL = 1

admm_chunk = _impl.admm_chunk
block_shrink = _impl.block_shrink
group_row_norms = _impl.group_row_norms

__all__ = ["BACKEND", "PROX_SHRINK", "PROX_BALL", "admm_chunk", "block_shrink",
           "group_row_norms"]
