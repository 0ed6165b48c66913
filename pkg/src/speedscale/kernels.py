"""Backend selection for the inner loops.

The compiled extension is used when it imports; otherwise the pure-Python
module is used.  Set ``SPEEDSCALE_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _pykernels

if os.environ.get("SPEEDSCALE_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:  # extension not built
        _impl = _pykernels

BACKEND = "cython" if _impl is not _pykernels else "python"

expect_shift = _impl.expect_shift
expect_geometric = _impl.expect_geometric
minplus_monotone = _impl.minplus_monotone
run_chain = _impl.run_chain


def expect(values, pmf, n_out):
    """``out[y] = E values[y + A]`` for ``y < n_out``, using the split form when present."""
    g = pmf.geometric
    if g is None:
        return _impl.expect_shift(values, pmf.idx, pmf.prob, n_out)
    return _impl.expect_geometric(values, g.stride, g.ratio, g.weights, g.tail_weight,
                                  g.point_idx, g.point_prob, n_out)
