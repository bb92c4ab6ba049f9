"""Backend selection for the hot loops.

The compiled extension is used when it was built; otherwise the pure-Python
reference is used. Both produce identical results.
"""
import numpy as np

from . import _matching_py

try:
    from . import _matching as _compiled
except ImportError:  # extension not built
    _compiled = None

BACKENDS = {"python": _matching_py.greedy_match}
if _compiled is not None:
    BACKENDS["compiled"] = _compiled.greedy_match

BACKEND = "compiled" if _compiled is not None else "python"


def greedy_match(ta, tb, window, backend=None):
    """Dispatch to the selected matcher; ``backend`` overrides the default."""
    fn = BACKENDS[backend or BACKEND]
    ta = np.ascontiguousarray(ta, dtype=np.float64)
    tb = np.ascontiguousarray(tb, dtype=np.float64)
    return fn(ta, tb, float(window))
