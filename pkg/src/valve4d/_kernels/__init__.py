"""Kernel dispatch: compiled extension when built, NumPy fallback otherwise.

Set VALVE4D_PURE_PYTHON=1 to force the fallback (used by parity tests and
the benchmark). `IMPL` reports which implementation is active.
"""

import os

if os.environ.get("VALVE4D_PURE_PYTHON") == "1":
    from . import _fallback as _impl
else:
    try:
        from . import _native as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _fallback as _impl

IMPL = _impl.IMPL
nn_warp = _impl.nn_warp
majority_vote = _impl.majority_vote
min_distances_to_mesh = _impl.min_distances_to_mesh

__all__ = ["IMPL", "nn_warp", "majority_vote", "min_distances_to_mesh"]
