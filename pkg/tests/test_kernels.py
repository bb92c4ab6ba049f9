import numpy as np
import pytest

from eprsim import kernels
from eprsim._matching_py import greedy_match as reference


def test_default_backend_registered():
    assert kernels.BACKEND in kernels.BACKENDS
    assert "python" in kernels.BACKENDS


@pytest.mark.skipif("compiled" not in kernels.BACKENDS, reason="extension not built")
@pytest.mark.parametrize("n,jitter,window", [(1000, 0.0, 1e-6), (20_000, 1e-4, 1e-3), (20_000, 5e-4, 2e-4)])
def test_compiled_matches_reference(n, jitter, window):
    rng = np.random.default_rng(n)
    t = np.cumsum(rng.exponential(1e-3, n))
    ta = np.sort(t + rng.normal(0, jitter, n))
    kept = t[rng.random(n) < 0.9]
    tb = np.sort(kept + rng.normal(0, jitter, len(kept)))
    ca, cb = kernels.greedy_match(ta, tb, window, backend="compiled")
    ra, rb = reference(ta, tb, window)
    assert np.array_equal(ca, ra) and np.array_equal(cb, rb)
    assert ca.dtype == np.int64


def test_accepts_lists():
    ia, ib = kernels.greedy_match([0.0, 1.0], [0.05, 2.0], 0.1)
    assert ia.tolist() == [0] and ib.tolist() == [0]
