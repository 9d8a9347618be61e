"""Kernel backend selection.

The per-record likelihood evaluations dominate sampling time, so they are
available both as a compiled Cython extension (``_core``) and as a pure-numpy
fallback (``_ref``).  The compiled backend is used when importable; set
``PRIVTAB_KERNELS=pure`` to force the fallback (e.g. for benchmarking) or
``PRIVTAB_KERNELS=compiled`` to fail loudly if the extension is missing.
"""

import os

from . import _ref

_choice = os.environ.get("PRIVTAB_KERNELS", "auto").lower()

if _choice == "pure":
    _impl = _ref
else:
    try:
        from . import _core as _impl
    except ImportError:
        if _choice == "compiled":
            raise
        _impl = _ref

BACKEND = "compiled" if _impl is not _ref else "pure"

fbs_records = _impl.fbs_records
fbs_weighted_sum = _impl.fbs_weighted_sum
fbp_records = _impl.fbp_records
fbp_weighted_sum = _impl.fbp_weighted_sum

__all__ = [
    "BACKEND",
    "fbs_records",
    "fbs_weighted_sum",
    "fbp_records",
    "fbp_weighted_sum",
]
