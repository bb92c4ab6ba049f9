"""Projection postulates for projective measurements.

Two update rules are kept strictly apart:

* ``luders_update`` projects onto the whole outcome eigenspace, whatever its
  dimension.
* ``von_neumann_update`` only yields a post-measurement state when the outcome
  is nondegenerate. For a degenerate outcome it needs an explicit refinement
  observable ``C`` with ``A = f(C)``; without one it returns an
  :class:`AmbiguousPostState` marker instead of a state.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import (DegenerateRefinement, DimensionMismatch, InvalidRefinement,
                     NotAFunction, ZeroProbabilityOutcome)
from .linalg import DensityOperator, Operator, PureState, to_json
from .spectral import SpectralDecomposition, find_coarse_graining, spectral_decompose

PROBABILITY_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class MeasurementRecord:
    """Outcome of a selective measurement together with the updated state.

    ``coarse_outcome`` is set only when a degenerate observable was measured
    through a refinement; ``outcome`` is then the refinement's eigenvalue.
    """

    outcome: float
    probability: float
    post_state: Union[PureState, DensityOperator]
    outcome_index: int
    rule: str = "luders"
    coarse_outcome: float | None = None
    coarse_probability: float | None = None

    def to_json(self) -> dict:
        out = {
            "kind": "record",
            "rule": self.rule,
            "outcome": float(self.outcome),
            "outcome_index": int(self.outcome_index),
            "probability": float(self.probability),
            "post_state": to_json(self.post_state),
        }
        if self.coarse_outcome is not None:
            out["coarse_outcome"] = float(self.coarse_outcome)
            out["coarse_probability"] = float(self.coarse_probability)
        return out


@dataclass(frozen=True)
class AmbiguousPostState:
    """Marker: the outcome is degenerate and no refinement was chosen."""

    observable_id: str
    outcome: float
    eigenspace_dim: int
    probability: float
    outcome_index: int

    def to_json(self) -> dict:
        return {
            "kind": "ambiguous",
            "observable_id": self.observable_id,
            "outcome": float(self.outcome),
            "outcome_index": int(self.outcome_index),
            "eigenspace_dim": int(self.eigenspace_dim),
            "probability": float(self.probability),
        }


def _coerce(state):
    """Return ``(is_pure, array)`` for a state-like value."""
    if isinstance(state, PureState):
        return True, state.amplitudes
    if isinstance(state, DensityOperator):
        return False, state.matrix
    arr = np.asarray(state, dtype=complex)
    if arr.ndim == 1:
        return True, PureState(arr).amplitudes
    return False, DensityOperator(arr).matrix


def _check_dims(arr: np.ndarray, d: SpectralDecomposition) -> None:
    if arr.shape[0] != d.dim:
        raise DimensionMismatch(f"state has dimension {arr.shape[0]}, observable {d.dim}")


def outcome_probabilities(state, d: SpectralDecomposition) -> np.ndarray:
    """Born probabilities as an array aligned with ``d.eigenvalues``."""
    pure, arr = _coerce(state)
    _check_dims(arr, d)
    if pure:
        probs = [np.vdot(arr, p.entries @ arr).real for p in d.projectors]
    else:
        probs = [np.trace(p.entries @ arr).real for p in d.projectors]
    return np.array(probs, dtype=float)


def born_probabilities(state, d: SpectralDecomposition) -> list[tuple[float, float]]:
    """List of ``(eigenvalue, probability)`` in increasing eigenvalue order."""
    probs = outcome_probabilities(state, d)
    return [(float(lam), float(p)) for lam, p in zip(d.eigenvalues, probs)]


def _project(pure: bool, arr: np.ndarray, p: np.ndarray, prob: float):
    if pure:
        return PureState(p @ arr / np.sqrt(prob))
    post = p @ arr @ p / prob
    return DensityOperator((post + post.conj().T) / 2)


def luders_update(state, d: SpectralDecomposition, outcome_index: int) -> MeasurementRecord:
    """Selective Lüders update: normalized projection onto the outcome eigenspace."""
    pure, arr = _coerce(state)
    _check_dims(arr, d)
    p = d.projectors[outcome_index].entries
    if pure:
        prob = float(np.vdot(arr, p @ arr).real)
    else:
        prob = float(np.trace(p @ arr).real)
    if prob <= PROBABILITY_FLOOR:
        raise ZeroProbabilityOutcome(
            f"outcome {d.eigenvalues[outcome_index]!r} has probability {prob:.3e}")
    return MeasurementRecord(
        outcome=float(d.eigenvalues[outcome_index]),
        probability=prob,
        post_state=_project(pure, arr, p, prob),
        outcome_index=outcome_index,
        rule="luders",
    )


def von_neumann_update(state, d: SpectralDecomposition, outcome_index: int,
                       refinement: SpectralDecomposition | None = None,
                       refined_index: int | None = None,
                       rng: np.random.Generator | None = None):
    """Von Neumann's projection postulate.

    Nondegenerate outcome: identical to :func:`luders_update`. Degenerate
    outcome without ``refinement``: returns :class:`AmbiguousPostState`.
    Degenerate outcome with a nondegenerate ``refinement`` ``C`` (``A = f(C)``):
    the refinement is measured (Lüders on rank-1 projectors) conditioned on
    ``f(c)`` equal to the requested coarse outcome.

    The refined outcome is ``refined_index`` if given, otherwise drawn from
    ``rng`` by inverse CDF over the compatible refined outcomes, otherwise the
    most probable compatible one (lowest eigenvalue on ties).
    """
    pure, arr = _coerce(state)
    _check_dims(arr, d)
    probs = outcome_probabilities(state, d)
    coarse_prob = float(probs[outcome_index])
    coarse_value = float(d.eigenvalues[outcome_index])
    if coarse_prob <= PROBABILITY_FLOOR:
        raise ZeroProbabilityOutcome(f"outcome {coarse_value!r} has probability {coarse_prob:.3e}")

    mult = d.multiplicities[outcome_index]
    if mult == 1:
        rec = luders_update(state, d, outcome_index)
        return MeasurementRecord(rec.outcome, rec.probability, rec.post_state,
                                 rec.outcome_index, rule="von_neumann")
    if refinement is None:
        return AmbiguousPostState(d.observable_id, coarse_value, mult, coarse_prob, outcome_index)

    if refinement.dim != d.dim:
        raise InvalidRefinement(f"refinement acts on dimension {refinement.dim}, not {d.dim}")
    source = d.operator if d.operator is not None else d.reconstruct()
    try:
        f = find_coarse_graining(refinement, source)
    except DegenerateRefinement as exc:
        raise InvalidRefinement(f"refinement is degenerate: {exc}") from exc
    except NotAFunction as exc:
        raise InvalidRefinement(f"measured observable is not a function of the refinement: {exc}") from exc

    compatible = [i for i, lam in enumerate(refinement.eigenvalues)
                  if d.index_of(f(float(lam))) == outcome_index]
    fine = outcome_probabilities(state, refinement)
    if refined_index is not None:
        if refined_index not in compatible:
            raise InvalidRefinement(
                f"refined outcome {refined_index} does not map onto coarse outcome {coarse_value!r}")
        chosen = refined_index
    elif rng is not None:
        weights = fine[compatible] / fine[compatible].sum()
        chosen = compatible[_inverse_cdf(weights, rng.random())]
    else:
        chosen = max(compatible, key=lambda i: (fine[i], -i))
    rec = luders_update(state, refinement, chosen)
    return MeasurementRecord(rec.outcome, rec.probability, rec.post_state, chosen,
                             rule="von_neumann", coarse_outcome=coarse_value,
                             coarse_probability=coarse_prob)


def nonselective_update(rho, d: SpectralDecomposition) -> DensityOperator:
    """``sum_i P_i rho P_i``."""
    _, arr = _coerce(rho)
    m = arr if arr.ndim == 2 else np.outer(arr, arr.conj())
    _check_dims(m, d)
    out = sum(p.entries @ m @ p.entries for p in d.projectors)
    return DensityOperator((out + out.conj().T) / 2)


def _inverse_cdf(probs: np.ndarray, u: float) -> int:
    cdf = np.cumsum(probs)
    idx = int(np.searchsorted(cdf, u * cdf[-1], side="right"))
    last = int(np.flatnonzero(probs > 0)[-1])
    return min(idx, last)


def sample_outcome(state, d: SpectralDecomposition,
                   rng: np.random.Generator) -> MeasurementRecord:
    """Draw an outcome by inverse CDF over increasing eigenvalues, then Lüders-update."""
    probs = np.clip(outcome_probabilities(state, d), 0.0, None)
    idx = _inverse_cdf(probs, rng.random())
    return luders_update(state, d, idx)


# --- finite-dimensional canonical pair ------------------------------------------

def dft_matrix(dim: int) -> np.ndarray:
    """Unitary DFT, ``F[x, p] = exp(2 pi i x p / dim) / sqrt(dim)``."""
    x = np.arange(dim)
    return np.exp(2j * np.pi * np.outer(x, x) / dim) / np.sqrt(dim)


@dataclass(frozen=True, eq=False)
class DiscreteCanonicalPair:
    """Position ``diag(0..dim-1)`` and its DFT conjugate momentum (hbar = 1)."""

    dim: int
    position: Operator
    momentum: Operator

    def plane_wave(self, p0: int) -> PureState:
        """Amplitudes ``exp(2 pi i p0 x / dim) / sqrt(dim)``: a momentum eigenstate."""
        x = np.arange(self.dim)
        return PureState(np.exp(2j * np.pi * p0 * x / self.dim) / np.sqrt(self.dim))

    def position_spectrum(self) -> SpectralDecomposition:
        return spectral_decompose(self.position, label="position")

    def momentum_spectrum(self) -> SpectralDecomposition:
        return spectral_decompose(self.momentum, label="momentum")


def make_canonical_pair(dim: int) -> DiscreteCanonicalPair:
    if dim < 2:
        raise ValueError(f"dim must be at least 2, got {dim}")
    f = dft_matrix(dim)
    x = np.diag(np.arange(dim, dtype=float)).astype(complex)
    p = f @ x @ f.conj().T
    return DiscreteCanonicalPair(dim, Operator(x), Operator((p + p.conj().T) / 2))


def joint_probabilities(state, first: SpectralDecomposition,
                        second: SpectralDecomposition) -> np.ndarray:
    """Table ``P[i, j]`` of sequential Lüders outcomes (first ``i``, then ``j``)."""
    probs = outcome_probabilities(state, first)
    table = np.zeros((len(first), len(second)))
    for i, pi in enumerate(probs):
        if pi <= PROBABILITY_FLOOR:
            continue
        post = luders_update(state, first, i).post_state
        table[i] = pi * outcome_probabilities(post, second)
    return table
