"""Kernel dispatch: compiled extension when available, else pure python.

Both backends expose the same functions with bit-identical results
(the suite checks this).  Set IDLALAB_FORCE_PYTHON=1 to skip the
extension, e.g. when chasing a miscompare.
"""

from __future__ import annotations

import os

if os.environ.get("IDLALAB_FORCE_PYTHON") == "1":
    from . import _kernels_py as _impl
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _kernels_py as _impl

IMPL = _impl.IMPL

debug_stream = _impl.debug_stream
idla_grow = _impl.idla_grow
flashing_grow = _impl.flashing_grow
coupled_run = _impl.coupled_run
replay_mark = _impl.replay_mark
region_walks = _impl.region_walks
flash_profile = _impl.flash_profile
covering_scan = _impl.covering_scan


def backends() -> dict:
    """Both backends keyed by name, for side-by-side comparisons."""
    from . import _kernels_py

    out = {"python": _kernels_py}
    try:
        from . import _kernels  # type: ignore[attr-defined]

        out["compiled"] = _kernels
    except ImportError:
        pass
    return out
