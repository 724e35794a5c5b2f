"""Kernel dispatch: the compiled extension when built, the numpy fallback otherwise.

Set ``MGSPECTRAL_PURE_PYTHON=1`` before import to force the fallback.
"""
import os

from . import _pykernels

if os.environ.get("MGSPECTRAL_PURE_PYTHON", "") in ("1", "true", "yes"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"

symbol_fill = _impl.symbol_fill
ladder_pivots = _impl.ladder_pivots
ladder_bisect = _impl.ladder_bisect
lower_bound_argmax = _impl.lower_bound_argmax
lower_bound_values = _pykernels.lower_bound_values

__all__ = ["BACKEND", "symbol_fill", "ladder_pivots", "ladder_bisect",
           "lower_bound_argmax", "lower_bound_values"]
