"""Bipartite pure-state analysis: Schmidt form, biorthogonal expansions,
conditional partner states, joint refinements and no-signaling checks.

States on ``S1 (x) S2`` use the index convention ``i1 * d2 + i2``, so the
amplitude vector reshapes row-major into the ``d1 x d2`` coefficient matrix.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (DegenerateInput, DimensionMismatch, InvariantViolation,
                     NonOrthonormalBasis, ZeroProbabilityOutcome)
from .linalg import (DensityOperator, Operator, PureState, as_matrix, as_vector,
                     partial_trace, random_density, random_hermitian, state_distance,
                     to_density, to_json)
from .measurement import (PROBABILITY_FLOOR, AmbiguousPostState, luders_update,
                          nonselective_update, von_neumann_update)
from .spectral import (FUNCTION_TOL, CoarseGraining, SpectralDecomposition,
                       apply_function, commutator_norm, decomposition_from_projectors,
                       find_coarse_graining, lift, spectral_decompose)

ORTHO_TOL = 1e-10
FAMILY_ORTHO_TOL = 1e-8
NO_SIGNALING_TOL = 1e-10


def _coefficients(psi, d1: int, d2: int) -> np.ndarray:
    v = as_vector(psi)
    if d1 < 1 or d2 < 1 or v.shape[0] != d1 * d2:
        raise DimensionMismatch(f"state of dimension {v.shape[0]} does not factor as {d1} x {d2}")
    return v.reshape(d1, d2)


def _fix_phase(v: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    mags = np.abs(v)
    k = int(np.flatnonzero(mags >= mags.max() - tol)[0])
    return v * (mags[k] / v[k])


def _orthonormalize(candidates: list, dim: int) -> np.ndarray:
    """Gram-Schmidt over ``candidates`` (``None`` = fill from standard basis)."""
    out = []
    spare = iter(np.eye(dim, dtype=complex))
    for c in candidates:
        vecs = [c] if c is not None else []
        while True:
            if not vecs:
                vecs.append(next(spare))
            w = vecs.pop()
            for u in out:
                w = w - np.vdot(u, w) * u
            for u in out:  # second pass for numerical orthogonality
                w = w - np.vdot(u, w) * u
            n = np.linalg.norm(w)
            if n > 1e-6:
                out.append(w / n)
                break
    return np.array(out).T


@dataclass(frozen=True, eq=False)
class SchmidtDecomposition:
    """``psi = sum_k coefficients[k] * basis_1[k] (x) basis_2[k]``."""

    coefficients: np.ndarray
    basis_1: tuple
    basis_2: tuple

    @property
    def rank(self) -> int:
        return int(np.sum(self.coefficients > 1e-10))

    def reconstruct(self) -> np.ndarray:
        return sum(c * np.kron(u.amplitudes, v.amplitudes)
                   for c, u, v in zip(self.coefficients, self.basis_1, self.basis_2))

    def to_json(self) -> dict:
        return {
            "coefficients": [float(c) for c in self.coefficients],
            "rank": self.rank,
            "basis_1": [to_json(u) for u in self.basis_1],
            "basis_2": [to_json(v) for v in self.basis_2],
        }


def biorthogonal_expansion(psi, basis_1: Sequence, d2: int | None = None) -> list[np.ndarray]:
    """Partner vectors ``psi_n`` with ``psi = sum_n basis_1[n] (x) psi_n``.

    ``basis_1`` must be an orthonormal basis of S1. The partners are
    unnormalized and in general not mutually orthogonal.
    """
    u = np.column_stack([as_vector(b) for b in basis_1])
    d1 = u.shape[0]
    if u.shape[1] != d1:
        raise NonOrthonormalBasis(f"{u.shape[1]} vectors cannot span a space of dimension {d1}")
    gram_err = float(np.max(np.abs(u.conj().T @ u - np.eye(d1))))
    if gram_err > ORTHO_TOL:
        raise NonOrthonormalBasis(f"basis Gram matrix deviates from identity by {gram_err:.3e}")
    v = as_vector(psi)
    if d2 is None:
        d2 = v.shape[0] // d1
    m = _coefficients(v, d1, d2)
    partners = u.conj().T @ m
    return [row.copy() for row in partners]


def schmidt_decompose(psi, d1: int, d2: int) -> SchmidtDecomposition:
    """Schmidt form via the eigenbasis of the reduced state of S1.

    The S1 basis diagonalizes ``Tr_2 |psi><psi|``; coefficients are the norms
    of the corresponding biorthogonal partner vectors (not square roots of
    eigenvalues, which would lose precision near zero).
    """
    m = _coefficients(psi, d1, d2)
    rho1 = m @ m.conj().T
    _, vecs = np.linalg.eigh((rho1 + rho1.conj().T) / 2)
    vecs = vecs[:, ::-1]
    basis_1 = [_fix_phase(vecs[:, k]) for k in range(d1)]
    partners = biorthogonal_expansion(m.reshape(-1), basis_1, d2)
    norms = np.array([np.linalg.norm(p) for p in partners])

    order = np.argsort(-norms, kind="stable")[: min(d1, d2)]
    coeffs = norms[order]
    candidates = [partners[k] / norms[k] if norms[k] > 1e-12 else None for k in order]
    v2 = _orthonormalize(candidates, d2)
    u1 = np.column_stack([basis_1[k] for k in order])
    return SchmidtDecomposition(
        coefficients=coeffs,
        basis_1=tuple(PureState.normalized(u1[:, k]) for k in range(len(order))),
        basis_2=tuple(PureState.normalized(v2[:, k]) for k in range(len(order))),
    )


def _require_nondegenerate(d: SpectralDecomposition, name: str) -> None:
    if not d.is_nondegenerate:
        raise DegenerateInput(f"{name} must be nondegenerate, multiplicities {d.multiplicities}")


def conditional_partner_state(psi, a_on_s1: SpectralDecomposition, outcome_index: int,
                              d2: int | None = None) -> tuple[PureState, float]:
    """Normalized S2 state left by outcome ``outcome_index`` of ``a (x) I`` (Lüders).

    Returns ``(state, probability)``.
    """
    _require_nondegenerate(a_on_s1, "a_on_s1")
    v = as_vector(psi)
    d1 = a_on_s1.dim
    d2 = v.shape[0] // d1 if d2 is None else d2
    u = a_on_s1.eigenvector(outcome_index)
    partner = u.conj() @ _coefficients(v, d1, d2)
    prob = float(np.vdot(partner, partner).real)
    if prob <= PROBABILITY_FLOOR:
        raise ZeroProbabilityOutcome(
            f"outcome {a_on_s1.eigenvalues[outcome_index]!r} has probability {prob:.3e}")
    return PureState(partner / np.sqrt(prob)), prob


@dataclass(frozen=True, eq=False)
class PartnerFamily:
    """Conditional S2 states for each positive-probability outcome on S1."""

    outcomes: tuple
    probabilities: tuple
    states: tuple
    orthonormal: bool
    observable: Operator | None

    def to_json(self) -> dict:
        return {
            "outcomes": [float(x) for x in self.outcomes],
            "probabilities": [float(p) for p in self.probabilities],
            "states": [to_json(s) for s in self.states],
            "orthonormal": self.orthonormal,
            "partner_observable": None if self.observable is None else to_json(self.observable),
        }


@dataclass(frozen=True, eq=False)
class EprAssignmentReport:
    """What the Lüders reading assigns to S2, next to what von Neumann licenses."""

    family_a: PartnerFamily
    family_b: PartnerFamily
    commutator_norm_ab: float
    commutator_norm_pq: float | None
    ambiguity_flags_a: tuple
    ambiguity_flags_b: tuple

    @property
    def conditional_states_a(self) -> tuple:
        return self.family_a.states

    @property
    def conditional_states_b(self) -> tuple:
        return self.family_b.states

    @property
    def partner_observable_p(self) -> Operator | None:
        return self.family_a.observable

    @property
    def partner_observable_q(self) -> Operator | None:
        return self.family_b.observable

    @property
    def all_ambiguous(self) -> bool:
        return all(isinstance(f, AmbiguousPostState)
                   for f in self.ambiguity_flags_a + self.ambiguity_flags_b)

    def to_json(self) -> dict:
        return {
            "family_a": self.family_a.to_json(),
            "family_b": self.family_b.to_json(),
            "commutator_norm_ab": self.commutator_norm_ab,
            "commutator_norm_pq": self.commutator_norm_pq,
            "ambiguity_flags_a": [f.to_json() for f in self.ambiguity_flags_a],
            "ambiguity_flags_b": [f.to_json() for f in self.ambiguity_flags_b],
            "all_outcomes_ambiguous": self.all_ambiguous,
        }


def _partner_family(psi, a: SpectralDecomposition, d2: int) -> PartnerFamily:
    outcomes, probs, states = [], [], []
    for i, lam in enumerate(a.eigenvalues):
        try:
            st, p = conditional_partner_state(psi, a, i, d2)
        except ZeroProbabilityOutcome:
            continue
        outcomes.append(float(lam))
        probs.append(p)
        states.append(st)
    vecs = np.column_stack([s.amplitudes for s in states])
    gram_err = float(np.max(np.abs(vecs.conj().T @ vecs - np.eye(len(states)))))
    # a partner observable needs a complete orthonormal eigenbasis of S2
    orthonormal = gram_err <= FAMILY_ORTHO_TOL and len(states) == d2
    observable = None
    if orthonormal:
        observable = Operator(sum(k * np.outer(s.amplitudes, s.amplitudes.conj())
                                  for k, s in enumerate(states)))
    return PartnerFamily(tuple(outcomes), tuple(probs), tuple(states), orthonormal, observable)


def _ambiguity_flags(psi, a: SpectralDecomposition, d2: int) -> tuple:
    lifted = lift(a, d2, side=1, label=f"{a.observable_id}(x)I")
    flags = []
    for i in range(len(lifted)):
        try:
            flags.append(von_neumann_update(psi, lifted, i))
        except ZeroProbabilityOutcome:
            continue
    return tuple(flags)


def epr_assignment_report(psi, a_on_s1: SpectralDecomposition, b_on_s1: SpectralDecomposition,
                          d2: int | None = None) -> EprAssignmentReport:
    """Both conditional families, the partner observables they define, and the
    von Neumann verdict on measuring ``a (x) I`` and ``b (x) I`` unrefined."""
    _require_nondegenerate(a_on_s1, "a_on_s1")
    _require_nondegenerate(b_on_s1, "b_on_s1")
    if a_on_s1.dim != b_on_s1.dim:
        raise DimensionMismatch("a_on_s1 and b_on_s1 act on different spaces")
    v = as_vector(psi)
    d1 = a_on_s1.dim
    d2 = v.shape[0] // d1 if d2 is None else d2
    _coefficients(v, d1, d2)
    a_op = a_on_s1.operator if a_on_s1.operator is not None else a_on_s1.reconstruct()
    b_op = b_on_s1.operator if b_on_s1.operator is not None else b_on_s1.reconstruct()
    comm_ab = commutator_norm(a_op, b_op)
    if comm_ab <= FAMILY_ORTHO_TOL:
        raise ValueError(f"a and b commute (commutator norm {comm_ab:.3e})")
    fam_a = _partner_family(v, a_on_s1, d2)
    fam_b = _partner_family(v, b_on_s1, d2)
    comm_pq = None
    if fam_a.observable is not None and fam_b.observable is not None:
        comm_pq = commutator_norm(fam_a.observable, fam_b.observable)
    return EprAssignmentReport(
        family_a=fam_a,
        family_b=fam_b,
        commutator_norm_ab=comm_ab,
        commutator_norm_pq=comm_pq,
        ambiguity_flags_a=_ambiguity_flags(v, a_on_s1, d2),
        ambiguity_flags_b=_ambiguity_flags(v, b_on_s1, d2),
    )


@dataclass(frozen=True, eq=False)
class JointRefinement:
    """Nondegenerate ``D`` on S1 (x) S2 with ``A (x) I = f(D)`` and ``I (x) C = g(D)``.

    ``D`` carries eigenvalue ``i * d2 + j`` on ``P_i (x) Q_j``.
    """

    decomposition: SpectralDecomposition
    f: CoarseGraining
    g: CoarseGraining
    pairs: tuple = field(default=())

    def to_json(self) -> dict:
        return {
            "eigenvalues": [float(x) for x in self.decomposition.eigenvalues],
            "pairs": [[float(x), float(y)] for x, y in self.pairs],
            "f": self.f.to_json(),
            "g": self.g.to_json(),
        }


def build_joint_refinement(a: SpectralDecomposition, c: SpectralDecomposition) -> JointRefinement:
    """Refinement of ``A (x) I`` and ``I (x) C`` for nondegenerate local observables."""
    _require_nondegenerate(a, "a")
    _require_nondegenerate(c, "c")
    d1, d2 = a.dim, c.dim
    labels, projectors, pairs = [], [], []
    for i, (la, pa) in enumerate(zip(a.eigenvalues, a.projectors)):
        for j, (lc, pc) in enumerate(zip(c.eigenvalues, c.projectors)):
            labels.append(float(i * d2 + j))
            projectors.append(np.kron(pa.entries, pc.entries))
            pairs.append((float(la), float(lc)))
    d = decomposition_from_projectors(labels, projectors, label="joint-refinement")
    f = CoarseGraining({lab: pa for lab, (pa, _) in zip(labels, pairs)})
    g = CoarseGraining({lab: pc for lab, (_, pc) in zip(labels, pairs)})

    a_op = a.operator if a.operator is not None else a.reconstruct()
    c_op = c.operator if c.operator is not None else c.reconstruct()
    target_f = np.kron(a_op.entries, np.eye(d2))
    target_g = np.kron(np.eye(d1), c_op.entries)
    err_f = float(np.max(np.abs(apply_function(d, f).entries - target_f)))
    err_g = float(np.max(np.abs(apply_function(d, g).entries - target_g)))
    if err_f > FUNCTION_TOL or err_g > FUNCTION_TOL:
        raise InvariantViolation(f"joint refinement check failed: f err {err_f:.3e}, g err {err_g:.3e}")
    return JointRefinement(d, f, g, tuple(pairs))


def refinement_via(a: SpectralDecomposition, c_on_s2) -> SpectralDecomposition:
    """Convenience: decomposition of the joint refinement of ``a`` with ``c_on_s2``."""
    c = c_on_s2 if isinstance(c_on_s2, SpectralDecomposition) else spectral_decompose(c_on_s2)
    return build_joint_refinement(a, c).decomposition


def no_signaling_check(rho, a_on_s1: SpectralDecomposition, d2: int | None = None) -> float:
    """Trace distance between S2's reduced state before and after a
    non-selective measurement of ``a (x) I``."""
    m = as_matrix(to_density(rho))
    d1 = a_on_s1.dim
    d2 = m.shape[0] // d1 if d2 is None else d2
    if d1 * d2 != m.shape[0]:
        raise DimensionMismatch(f"state of dimension {m.shape[0]} does not factor as {d1} x {d2}")
    lifted = lift(a_on_s1, d2, side=1)
    before = partial_trace(m, 2, d1, d2)
    after = partial_trace(nonselective_update(m, lifted), 2, d1, d2)
    return state_distance(before, after)


def selective_shift(rho, a_on_s1: SpectralDecomposition, d2: int | None = None) -> list[float]:
    """Per-outcome trace distance between S2's reduced state and its Lüders
    conditional state; non-zero shifts reflect selection, not signaling."""
    m = as_matrix(to_density(rho))
    d1 = a_on_s1.dim
    d2 = m.shape[0] // d1 if d2 is None else d2
    lifted = lift(a_on_s1, d2, side=1)
    before = partial_trace(m, 2, d1, d2)
    out = []
    for i in range(len(lifted)):
        try:
            rec = luders_update(DensityOperator(m), lifted, i)
        except ZeroProbabilityOutcome:
            out.append(0.0)
            continue
        out.append(state_distance(before, partial_trace(rec.post_state, 2, d1, d2)))
    return out


@dataclass(frozen=True)
class NoSignalingSweep:
    n_instances: int
    max_distance: float
    max_selective_shift: float
    dims: tuple
    tolerance: float = NO_SIGNALING_TOL

    @property
    def passed(self) -> bool:
        return self.max_distance <= self.tolerance

    def to_json(self) -> dict:
        return {
            "n_instances": self.n_instances,
            "max_distance": self.max_distance,
            "max_selective_shift": self.max_selective_shift,
            "dims": [list(d) for d in self.dims],
            "tolerance": self.tolerance,
            "passed": self.passed,
        }


DEFAULT_SWEEP_DIMS = ((2, 2), (2, 3), (3, 2), (3, 3), (2, 4), (4, 2), (3, 4), (4, 3), (4, 4))


def random_local_observable(dim: int, rng: np.random.Generator) -> SpectralDecomposition:
    """Random Hermitian; every third draw has a deliberately degenerate spectrum."""
    h = random_hermitian(dim, rng)
    if rng.random() < 1 / 3 and dim > 2:
        d = spectral_decompose(h)
        vals = np.round(d.eigenvalues)  # collapse to a few integer levels
        vals[0] = vals[1]
        return spectral_decompose(Operator(sum(v * p.entries for v, p in zip(vals, d.projectors))))
    return spectral_decompose(h)


def no_signaling_sweep(n_instances: int, rng: np.random.Generator,
                       dims: Sequence = DEFAULT_SWEEP_DIMS) -> NoSignalingSweep:
    """Randomized check over ``n_instances`` (state, local observable) pairs."""
    worst, worst_shift = 0.0, 0.0
    dims = tuple(tuple(d) for d in dims)
    for k in range(n_instances):
        d1, d2 = dims[k % len(dims)]
        rank = int(rng.integers(1, d1 * d2 + 1))
        rho = random_density(d1 * d2, rng, rank=rank)
        a = random_local_observable(d1, rng)
        worst = max(worst, no_signaling_check(rho, a, d2))
        worst_shift = max(worst_shift, max(selective_shift(rho, a, d2)))
    return NoSignalingSweep(n_instances, worst, worst_shift, dims)
