import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from eprsim import linalg
from eprsim.errors import DimensionMismatch, InvalidState, NotHermitian
from eprsim.linalg import (SIGMA_X, SIGMA_Z, DensityOperator, Operator, PureState,
                           partial_trace, random_density, random_state, singlet,
                           state_distance, symmetrize, tensor)

I2 = np.eye(2)


def kron_oracle(a, b):
    """Explicit index loop, independent of np.kron."""
    a, b = np.asarray(a), np.asarray(b)
    n1, n2 = a.shape[0], b.shape[0]
    out = np.zeros((n1 * n2, n1 * n2), dtype=complex)
    for i1 in range(n1):
        for j1 in range(n1):
            for i2 in range(n2):
                for j2 in range(n2):
                    out[i1 * n2 + i2, j1 * n2 + j2] = a[i1, j1] * b[i2, j2]
    return out


def partial_trace_oracle(rho, keep, d1, d2):
    rho = np.asarray(rho)
    if keep == 1:
        out = np.zeros((d1, d1), dtype=complex)
        for i in range(d1):
            for k in range(d1):
                out[i, k] = sum(rho[i * d2 + j, k * d2 + j] for j in range(d2))
    else:
        out = np.zeros((d2, d2), dtype=complex)
        for j in range(d2):
            for l in range(d2):
                out[j, l] = sum(rho[i * d2 + j, i * d2 + l] for i in range(d1))
    return out


class TestTensor:
    def test_identity(self):
        assert_allclose(tensor(Operator(I2), Operator(I2)).entries, np.eye(4))

    def test_diagonal(self):
        assert_allclose(tensor(SIGMA_Z, Operator(I2)).entries, np.diag([1, 1, -1, -1]))

    def test_mixed_product(self):
        lhs = tensor(SIGMA_X, Operator(I2)) @ tensor(Operator(I2), SIGMA_Z)
        # sigma_x (x) sigma_z written out by hand
        expected = np.array([[0, 0, 1, 0], [0, 0, 0, -1], [1, 0, 0, 0], [0, -1, 0, 0]])
        assert_allclose(lhs.entries, expected)
        assert_allclose(tensor(SIGMA_X, SIGMA_Z).entries, expected)

    def test_matches_index_loop(self, rng):
        a = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        b = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        assert_allclose(tensor(Operator(a), Operator(b)).entries, kron_oracle(a, b))

    def test_states(self):
        psi = tensor(linalg.basis_state(0, 2), linalg.basis_state(1, 2))
        assert isinstance(psi, PureState)
        assert_allclose(psi.amplitudes, [0, 1, 0, 0])

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**32 - 1))
    def test_associative(self, d1, d2, d3, seed):
        r = np.random.default_rng(seed)
        a, b, c = (Operator(r.normal(size=(d, d)) + 1j * r.normal(size=(d, d))) for d in (d1, d2, d3))
        left = tensor(tensor(a, b), c).entries
        right = tensor(a, tensor(b, c)).entries
        assert np.max(np.abs(left - right)) <= 1e-12

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 3), st.integers(1, 3), st.integers(0, 2**32 - 1))
    def test_mixed_product_property(self, d1, d2, seed):
        r = np.random.default_rng(seed)
        a, c = (Operator(r.normal(size=(d1, d1))) for _ in range(2))
        b, d = (Operator(r.normal(size=(d2, d2))) for _ in range(2))
        assert_allclose((tensor(a, b) @ tensor(c, d)).entries, tensor(a @ c, b @ d).entries, atol=1e-12)


class TestPartialTrace:
    def test_product_state(self, rng):
        r1, r2 = random_density(2, rng), random_density(3, rng)
        red = partial_trace(np.kron(r1.matrix, r2.matrix), 2, 2, 3)
        assert_allclose(red.matrix, r2.matrix, atol=1e-12)
        assert_allclose(partial_trace(np.kron(r1.matrix, r2.matrix), 1, 2, 3).matrix, r1.matrix, atol=1e-12)

    def test_singlet(self):
        assert_allclose(partial_trace(singlet().density(), 2, 2, 2).matrix, np.eye(2) / 2, atol=1e-15)

    @pytest.mark.parametrize("keep", [1, 2])
    def test_index_sum_oracle(self, rng, keep):
        rho = random_density(4, rng)
        red = partial_trace(rho, keep, 2, 2)
        assert_allclose(red.matrix, partial_trace_oracle(rho.matrix, keep, 2, 2), atol=1e-14)
        assert abs(np.trace(red.matrix) - 1) <= 1e-12

    def test_dimension_mismatch(self, rng):
        with pytest.raises(DimensionMismatch):
            partial_trace(random_density(4, rng), 2, 3, 2)

    def test_commutes_with_local_channel(self, rng):
        # a unitary on S1 does not change Tr_1; a unitary on S2 commutes with Tr_1
        for _ in range(20):
            rho = random_density(6, rng)
            q, _ = np.linalg.qr(rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3)))
            u = np.kron(np.eye(2), q)
            out = u @ rho.matrix @ u.conj().T
            lhs = partial_trace(out, 2, 2, 3).matrix
            rhs = q @ partial_trace(rho, 2, 2, 3).matrix @ q.conj().T
            assert np.max(np.abs(lhs - rhs)) <= 1e-10


class TestStateDistance:
    def test_zero(self, rng):
        rho = random_density(3, rng)
        assert state_distance(rho, rho) == pytest.approx(0, abs=1e-15)

    def test_orthogonal(self):
        assert state_distance(linalg.basis_state(0, 2), linalg.basis_state(1, 2)) == pytest.approx(1)

    def test_half(self):
        # eigenvalues of |0><0| - I/2 are +-1/2
        assert state_distance(np.diag([1, 0]), np.eye(2) / 2) == pytest.approx(0.5)

    def test_triangle_and_symmetry(self, rng):
        for _ in range(100):
            a, b, c = (random_density(3, rng) for _ in range(3))
            assert state_distance(a, b) == pytest.approx(state_distance(b, a), abs=1e-14)
            assert state_distance(a, c) <= state_distance(a, b) + state_distance(b, c) + 1e-10

    def test_dimension_mismatch(self, rng):
        with pytest.raises(DimensionMismatch):
            state_distance(random_density(2, rng), random_density(3, rng))


class TestContainers:
    def test_immutable(self):
        op = Operator(np.eye(2))
        with pytest.raises(ValueError):
            op.entries[0, 0] = 5

    def test_hermitian_validation(self):
        with pytest.raises(NotHermitian):
            Operator.hermitian([[0, 1], [0, 0]])
        assert Operator.hermitian(SIGMA_X.entries).is_hermitian()

    def test_symmetrize_is_explicit(self):
        m = np.array([[1, 1e-6], [0, 1]])
        assert not Operator(m).is_hermitian()
        assert symmetrize(m).is_hermitian()

    def test_state_norm(self):
        with pytest.raises(InvalidState):
            PureState([1, 1])
        assert PureState.normalized([1, 1]).amplitudes[0] == pytest.approx(2 ** -0.5)

    def test_density_invariants(self):
        with pytest.raises(InvalidState):
            DensityOperator(np.diag([0.6, 0.6]))
        with pytest.raises(InvalidState):
            DensityOperator(np.diag([1.5, -0.5]))

    def test_dimension_cap(self):
        with pytest.raises(DimensionMismatch):
            Operator(np.eye(linalg.MAX_DIM + 1))
        assert Operator(np.eye(linalg.MAX_DIM)).dim == linalg.MAX_DIM

    def test_non_square(self):
        with pytest.raises(DimensionMismatch):
            Operator(np.ones((2, 3)))


class TestJson:
    def test_operator_roundtrip(self, rng):
        op = linalg.random_hermitian(3, rng)
        obj = json.loads(json.dumps(linalg.to_json(op)))
        assert obj["dim"] == 3 and len(obj["entries"]) == 3 and len(obj["entries"][0][0]) == 2
        back = linalg.from_json(obj)
        assert isinstance(back, Operator)
        assert np.array_equal(back.entries, op.entries)

    def test_state_roundtrip(self, rng):
        psi = random_state(4, rng)
        back = linalg.from_json(json.loads(json.dumps(linalg.to_json(psi))))
        assert isinstance(back, PureState)
        assert np.array_equal(back.amplitudes, psi.amplitudes)

    def test_density_roundtrip(self, rng):
        rho = random_density(2, rng)
        back = linalg.from_json(linalg.to_json(rho))
        assert isinstance(back, DensityOperator)

    @pytest.mark.parametrize("bad, field", [
        ({"dim": 2}, "x.entries"),
        ({"dim": 3, "entries": [[1, 0], [0, 0]]}, "x.dim"),
        ({"entries": [[1, 0], ["a", 0]]}, "x.entries[1]"),
        ({"entries": [[[1, 0], [0, 0]], [[0, 0]]]}, "x.entries"),
    ])
    def test_malformed(self, bad, field):
        with pytest.raises(ValueError, match=field.replace("[", r"\[").replace("]", r"\]")):
            linalg.from_json(bad, field="x")
