"""Edge-kernel dispatch: compiled extension when available, numpy otherwise.

Set ASYNCPGO_PURE_PYTHON=1 to force the numpy implementation. The active
implementation is reported in IMPL_NAME ("compiled" or "numpy").
"""

import os

from . import _edge_py

if os.environ.get("ASYNCPGO_PURE_PYTHON"):
    _impl = _edge_py
    IMPL_NAME = "numpy"
else:
    try:
        from . import _edge_cy as _impl  # type: ignore[no-redef]

        IMPL_NAME = "compiled"
    except ImportError:
        _impl = _edge_py
        IMPL_NAME = "numpy"

edge_cost = _impl.edge_cost
edge_grad = _impl.edge_grad
edge_cost_grad = _impl.edge_cost_grad
project_tangent = _impl.project_tangent_batch

if _impl is _edge_py:
    polar_retract = _edge_py.polar_retract_batch
else:

    def polar_retract(A):
        try:
            return _impl.polar_retract_batch(A)
        except ValueError:
            # rank-deficient block: the SVD-based fallback handles it
            return _edge_py.polar_retract_batch(A)


__all__ = ["edge_cost", "edge_grad", "edge_cost_grad", "project_tangent", "polar_retract", "IMPL_NAME"]
