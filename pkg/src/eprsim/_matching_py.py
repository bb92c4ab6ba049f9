"""Pure-Python greedy coincidence matcher (reference implementation)."""
import numpy as np


def greedy_match(ta, tb, window):
    """Pair earliest mutually-unmatched cross-wing events with ``|dt| < window``.

    Both inputs must be sorted ascending. Two-pointer scan: when the current
    heads are within the window they are paired, otherwise the earlier head can
    never match anything still unmatched on the other wing and is skipped.
    Returns index arrays ``(ia, ib)``.
    """
    a_list = np.asarray(ta, dtype=float).tolist()
    b_list = np.asarray(tb, dtype=float).tolist()
    na, nb = len(a_list), len(b_list)
    ia, ib = [], []
    i = j = 0
    while i < na and j < nb:
        a = a_list[i]
        b = b_list[j]
        if abs(a - b) < window:
            ia.append(i)
            ib.append(j)
            i += 1
            j += 1
        elif a < b:
            i += 1
        else:
            j += 1
    return np.array(ia, dtype=np.int64), np.array(ib, dtype=np.int64)
