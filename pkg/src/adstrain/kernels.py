"""Backend selection for the hot loops.

The compiled Cython module is used when it was built; otherwise the numpy
implementations are used. Set ``ADSTRAIN_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _pykernels

BACKEND = "python"

if not os.environ.get("ADSTRAIN_PURE_PYTHON"):
    try:
        from . import _ckernels as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
else:
    _impl = _pykernels

zipf_ranks = _impl.zipf_ranks
dedup_first = _impl.dedup_first
node_bytes = _impl.node_bytes
best_combination = _impl.best_combination


def backends():
    """Return the available backends as a name -> module mapping."""
    out = {"python": _pykernels}
    try:
        from . import _ckernels

        out["cython"] = _ckernels
    except ImportError:
        pass
    return out
