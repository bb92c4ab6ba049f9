import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from eprsim.composite import (biorthogonal_expansion, build_joint_refinement,
                              conditional_partner_state, epr_assignment_report,
                              no_signaling_check, no_signaling_sweep, schmidt_decompose,
                              selective_shift)
from eprsim.errors import DegenerateInput, NonOrthonormalBasis
from eprsim.linalg import (SIGMA_X, SIGMA_Z, Operator, PureState, basis_state,
                           maximally_entangled, random_density, random_hermitian, random_state,
                           singlet, spin_along, tensor)
from eprsim.measurement import (AmbiguousPostState, born_probabilities, dft_matrix,
                                make_canonical_pair)
from eprsim.spectral import apply_function, commutator_norm, lift, spectral_decompose

BELL = PureState(np.array([1, 0, 0, 1]) / math.sqrt(2))


def svd_oracle(v, d1, d2):
    return np.linalg.svd(np.asarray(v).reshape(d1, d2), compute_uv=False)


class TestSchmidt:
    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32 - 1))
    def test_matches_svd(self, d1, d2, seed):
        psi = random_state(d1 * d2, np.random.default_rng(seed))
        s = schmidt_decompose(psi, d1, d2)
        assert_allclose(s.coefficients, svd_oracle(psi.amplitudes, d1, d2), atol=1e-9)
        assert np.max(np.abs(s.reconstruct() - psi.amplitudes)) <= 1e-9

    def test_bases_orthonormal(self, rng):
        for d1, d2 in [(2, 5), (5, 2), (4, 4)]:
            s = schmidt_decompose(random_state(d1 * d2, rng), d1, d2)
            for basis in (s.basis_1, s.basis_2):
                m = np.column_stack([b.amplitudes for b in basis])
                assert_allclose(m.conj().T @ m, np.eye(m.shape[1]), atol=1e-10)

    def test_reduced_density_oracle(self, rng):
        psi = random_state(12, rng)
        m = psi.amplitudes.reshape(3, 4)
        evals = np.sort(np.linalg.eigvalsh(m @ m.conj().T))[::-1]
        assert_allclose(schmidt_decompose(psi, 3, 4).coefficients ** 2, evals, atol=1e-12)

    def test_product_rank_one(self, rng):
        psi = tensor(random_state(3, rng), random_state(4, rng))
        s = schmidt_decompose(psi, 3, 4)
        assert s.rank == 1
        assert s.coefficients[0] == pytest.approx(1)

    def test_bell(self):
        s = schmidt_decompose(BELL, 2, 2)
        assert_allclose(s.coefficients, [1 / math.sqrt(2)] * 2, atol=1e-12)
        assert s.rank == 2

    def test_low_rank_completion(self):
        psi = (tensor(basis_state(0, 4), basis_state(1, 4)).amplitudes
               + tensor(basis_state(2, 4), basis_state(3, 4)).amplitudes) / math.sqrt(2)
        s = schmidt_decompose(psi, 4, 4)
        assert s.rank == 2
        assert_allclose(s.reconstruct(), psi, atol=1e-12)
        m = np.column_stack([b.amplitudes for b in s.basis_2])
        assert_allclose(m.conj().T @ m, np.eye(4), atol=1e-10)

    def test_descending(self, rng):
        c = schmidt_decompose(random_state(20, rng), 4, 5).coefficients
        assert np.all(np.diff(c) <= 1e-15)


class TestBiorthogonal:
    def test_schmidt_basis_gives_orthogonal_partners(self, rng):
        psi = random_state(9, rng)
        s = schmidt_decompose(psi, 3, 3)
        partners = biorthogonal_expansion(psi, s.basis_1)
        g = np.array([[np.vdot(a, b) for b in partners] for a in partners])
        assert_allclose(g, np.diag(s.coefficients ** 2), atol=1e-10)

    def test_bell_in_hadamard_basis(self):
        plus = PureState.normalized([1, 1])
        minus = PureState(np.array([1, -1]) / math.sqrt(2))
        pp, pm = biorthogonal_expansion(BELL, [plus, minus])
        assert_allclose(pp, np.array([1, 1]) / 2, atol=1e-15)
        assert_allclose(pm, np.array([1, -1]) / 2, atol=1e-15)

    def test_reassembles(self, rng):
        psi = random_state(12, rng)
        basis = [PureState(c) for c in np.linalg.qr(rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3)))[0].T]
        partners = biorthogonal_expansion(psi, basis, 4)
        total = sum(np.kron(b.amplitudes, p) for b, p in zip(basis, partners))
        assert_allclose(total, psi.amplitudes, atol=1e-12)

    def test_rejects_bad_basis(self):
        with pytest.raises(NonOrthonormalBasis):
            biorthogonal_expansion(BELL, [[1, 0], [1, 1]])
        with pytest.raises(NonOrthonormalBasis):
            biorthogonal_expansion(BELL, [[1, 0]])


class TestConditionalPartner:
    def test_singlet(self):
        sz = spectral_decompose(SIGMA_Z)
        up, p_up = conditional_partner_state(singlet(), sz, 1)
        down, p_down = conditional_partner_state(singlet(), sz, 0)
        assert p_up == pytest.approx(0.5) and p_down == pytest.approx(0.5)
        assert abs(np.vdot([0, 1], up.amplitudes)) == pytest.approx(1)
        assert abs(np.vdot([1, 0], down.amplitudes)) == pytest.approx(1)

    def test_probabilities_match_born(self, rng):
        psi = random_state(12, rng)
        a = spectral_decompose(random_hermitian(3, rng))
        born = [p for _, p in born_probabilities(psi, lift(a, 4))]
        probs = [conditional_partner_state(psi, a, i, 4)[1] for i in range(3)]
        assert_allclose(probs, born, atol=1e-12)

    def test_degenerate_rejected(self):
        with pytest.raises(DegenerateInput):
            conditional_partner_state(BELL, spectral_decompose(np.eye(2)), 0)


class TestEprReport:
    def test_qubit_bell(self):
        rep = epr_assignment_report(BELL, spectral_decompose(SIGMA_Z), spectral_decompose(SIGMA_X))
        assert rep.commutator_norm_ab == pytest.approx(2)
        assert rep.family_a.orthonormal and rep.family_b.orthonormal
        # P and Q carry labels 0..d2-1, which scales the commutator by 1/4 relative to +-1
        assert rep.commutator_norm_pq == pytest.approx(0.5)
        relabel = [2 * op.entries - np.eye(2) for op in (rep.partner_observable_p, rep.partner_observable_q)]
        assert commutator_norm(*relabel) == pytest.approx(2)
        assert rep.all_ambiguous
        assert len(rep.ambiguity_flags_a) == 2 and len(rep.ambiguity_flags_b) == 2
        assert rep.to_json()["all_outcomes_ambiguous"] is True

    def test_qudit_position_momentum(self):
        pair = make_canonical_pair(8)
        rep = epr_assignment_report(maximally_entangled(8), pair.position_spectrum(),
                                    pair.momentum_spectrum())
        f = dft_matrix(8)
        for s in rep.conditional_states_a:
            assert np.max(np.abs(s.amplitudes)) >= 1 - 1e-8
        for s in rep.conditional_states_b:
            assert np.max(np.abs(f.conj().T @ s.amplitudes)) >= 1 - 1e-8
        assert rep.commutator_norm_pq > 0
        assert rep.all_ambiguous
        assert all(flag.eigenspace_dim == 8 for flag in rep.ambiguity_flags_a)

    def test_product_state(self, rng):
        psi = tensor(random_state(2, rng), random_state(2, rng))
        rep = epr_assignment_report(psi, spectral_decompose(SIGMA_Z), spectral_decompose(SIGMA_X))
        # every conditional state is the same S2 factor: not a basis, no partner observable
        assert not rep.family_a.orthonormal
        assert rep.partner_observable_p is None and rep.commutator_norm_pq is None
        assert rep.to_json()["commutator_norm_pq"] is None

    def test_commuting_rejected(self):
        with pytest.raises(ValueError):
            epr_assignment_report(BELL, spectral_decompose(SIGMA_Z), spectral_decompose(2 * SIGMA_Z.entries))

    def test_zero_probability_skipped(self):
        psi = tensor(basis_state(0, 2), PureState.normalized([1, 1]))
        rep = epr_assignment_report(psi, spectral_decompose(SIGMA_Z), spectral_decompose(SIGMA_X))
        assert rep.family_a.outcomes == (1.0,)
        assert len(rep.ambiguity_flags_a) == 1
        assert all(isinstance(f, AmbiguousPostState) for f in rep.ambiguity_flags_a)


class TestJointRefinement:
    def test_functions_reproduce_locals(self, rng):
        for d1, d2 in [(2, 2), (2, 3), (3, 2)]:
            a = spectral_decompose(random_hermitian(d1, rng))
            c = spectral_decompose(random_hermitian(d2, rng))
            j = build_joint_refinement(a, c)
            assert j.decomposition.is_nondegenerate
            assert_allclose(apply_function(j.decomposition, j.f).entries,
                            np.kron(a.operator.entries, np.eye(d2)), atol=1e-9)
            assert_allclose(apply_function(j.decomposition, j.g).entries,
                            np.kron(np.eye(d1), c.operator.entries), atol=1e-9)

    def test_labels(self):
        j = build_joint_refinement(spectral_decompose(SIGMA_Z), spectral_decompose(SIGMA_X))
        assert list(j.decomposition.eigenvalues) == [0.0, 1.0, 2.0, 3.0]
        assert j.pairs == ((-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0))

    def test_degenerate_rejected(self):
        with pytest.raises(DegenerateInput):
            build_joint_refinement(spectral_decompose(np.eye(2)), spectral_decompose(SIGMA_X))


class TestNoSignaling:
    def test_singlet(self):
        sz = spectral_decompose(SIGMA_Z)
        assert no_signaling_check(singlet(), sz) <= 1e-12
        # selective conditioning visibly moves the S2 state
        assert min(selective_shift(singlet(), sz)) > 0.1

    @settings(max_examples=50, deadline=None)
    @given(st.sampled_from([(2, 2), (2, 3), (3, 3), (4, 2)]), st.integers(0, 2**32 - 1))
    def test_random(self, dims, seed):
        r = np.random.default_rng(seed)
        d1, d2 = dims
        rho = random_density(d1 * d2, r, rank=int(r.integers(1, d1 * d2 + 1)))
        assert no_signaling_check(rho, spectral_decompose(random_hermitian(d1, r)), d2) <= 1e-10

    def test_spin_settings(self):
        for theta in np.linspace(0, math.pi, 7):
            assert no_signaling_check(singlet(), spectral_decompose(spin_along(theta))) <= 1e-12

    def test_sweep(self, rng):
        sweep = no_signaling_sweep(100, rng)
        assert sweep.passed and sweep.max_distance <= 1e-10
        assert sweep.max_selective_shift > 0.1
        assert sweep.to_json()["passed"] is True

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            no_signaling_check(np.eye(5) / 5, spectral_decompose(SIGMA_Z))


def test_operator_roundtrip_through_lift():
    a = spectral_decompose(Operator.hermitian(np.diag([1.0, 2.0, 3.0])))
    assert lift(a, 2).multiplicities == (2, 2, 2)
