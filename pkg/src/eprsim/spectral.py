"""Degeneracy-aware spectral analysis of Hermitian operators.

Eigenvalues that agree to within ``cluster_tol * max(1, spectral radius)`` are
merged (single linkage on the sorted spectrum) and represented by a single
eigenprojector. Individual eigenvectors inside a degenerate eigenspace are
never exposed: only the projectors are basis independent.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import (DegenerateRefinement, DimensionMismatch, FunctionUndefined,
                     NotAFunction, NotHermitian)
from .linalg import (HERMITIAN_TOL, Operator, as_matrix, hermitian_deviation,
                     matrix_to_json)

DEFAULT_CLUSTER_TOL = 1e-8
FUNCTION_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """Distinct eigenvalues (strictly increasing) with their eigenprojectors."""

    eigenvalues: np.ndarray
    projectors: tuple
    multiplicities: tuple
    operator: Operator | None = None
    label: str | None = None

    def __post_init__(self):
        ev = np.array(self.eigenvalues, dtype=float)
        ev.setflags(write=False)
        object.__setattr__(self, "eigenvalues", ev)
        object.__setattr__(self, "projectors", tuple(
            p if isinstance(p, Operator) else Operator(p) for p in self.projectors))
        object.__setattr__(self, "multiplicities", tuple(int(m) for m in self.multiplicities))
        if not (len(ev) == len(self.projectors) == len(self.multiplicities)):
            raise ValueError("eigenvalues, projectors and multiplicities differ in length")
        if len(ev) > 1 and np.any(np.diff(ev) <= 0):
            raise ValueError("eigenvalues must be strictly increasing")

    @property
    def dim(self) -> int:
        return self.projectors[0].dim

    def __len__(self):
        return len(self.eigenvalues)

    @property
    def is_nondegenerate(self) -> bool:
        return all(m == 1 for m in self.multiplicities)

    @property
    def observable_id(self) -> str:
        """Label if given, else a digest of the decomposed operator (or projectors)."""
        if self.label:
            return self.label
        h = hashlib.sha1()
        if self.operator is not None:
            h.update(np.ascontiguousarray(self.operator.entries).tobytes())
        else:
            h.update(np.ascontiguousarray(self.eigenvalues).tobytes())
            for p in self.projectors:
                h.update(np.ascontiguousarray(p.entries).tobytes())
        return "obs-" + h.hexdigest()[:12]

    def eigenvector(self, index: int) -> np.ndarray:
        """Unit eigenvector of a rank-1 projector, phase-fixed.

        The phase makes the largest-magnitude component real and positive.
        """
        if self.multiplicities[index] != 1:
            raise DegenerateRefinement(
                f"eigenvalue {self.eigenvalues[index]!r} has multiplicity "
                f"{self.multiplicities[index]}; no distinguished eigenvector")
        p = self.projectors[index].entries
        col = int(np.argmax(np.linalg.norm(p, axis=0)))
        v = p[:, col] / np.linalg.norm(p[:, col])
        k = _lead_index(v)
        return v * (abs(v[k]) / v[k])

    def eigenbasis(self) -> np.ndarray:
        """Columns are the eigenvectors of a nondegenerate decomposition."""
        return np.column_stack([self.eigenvector(i) for i in range(len(self))])

    def reconstruct(self) -> Operator:
        return apply_function(self, lambda x: x)

    def index_of(self, value: float, tol: float = FUNCTION_TOL) -> int:
        """Index of the distinct eigenvalue nearest to ``value`` (within tolerance)."""
        scale = max(1.0, float(np.max(np.abs(self.eigenvalues))))
        i = int(np.argmin(np.abs(self.eigenvalues - value)))
        if abs(self.eigenvalues[i] - value) > tol * scale:
            raise KeyError(f"{value!r} is not an eigenvalue")
        return i

    def to_json(self) -> dict:
        return {
            "eigenvalues": [float(x) for x in self.eigenvalues],
            "multiplicities": list(self.multiplicities),
            "projectors": [{"dim": p.dim, "entries": matrix_to_json(p.entries)}
                           for p in self.projectors],
        }


def _lead_index(v: np.ndarray, tol: float = 1e-12) -> int:
    mags = np.abs(v)
    return int(np.flatnonzero(mags >= mags.max() - tol)[0])


def spectral_decompose(a, cluster_tol: float = DEFAULT_CLUSTER_TOL,
                       label: str | None = None) -> SpectralDecomposition:
    """Cluster the spectrum of a Hermitian operator into eigenprojectors.

    Examples
    --------
    >>> d = spectral_decompose(np.diag([1.0, 1.0, 2.0]))
    >>> d.eigenvalues.tolist(), d.multiplicities
    ([1.0, 2.0], (2, 1))
    """
    m = as_matrix(a)
    dev = hermitian_deviation(m)
    if dev > HERMITIAN_TOL:
        raise NotHermitian(f"max|A - A^dagger| = {dev:.3e} exceeds {HERMITIAN_TOL:.1e}")
    op = a if isinstance(a, Operator) else Operator(m)
    w, v = np.linalg.eigh(m)
    scale = max(1.0, float(np.max(np.abs(w))))
    breaks = np.flatnonzero(np.diff(w) > cluster_tol * scale) + 1
    groups = np.split(np.arange(len(w)), breaks)

    eigenvalues, projectors, mults = [], [], []
    for g in groups:
        vecs = v[:, g]
        p = vecs @ vecs.conj().T
        projectors.append(Operator((p + p.conj().T) / 2))
        eigenvalues.append(float(np.mean(w[g])))
        mults.append(len(g))
    return SpectralDecomposition(np.array(eigenvalues), tuple(projectors), tuple(mults),
                                 operator=op, label=label)


def apply_function(d: SpectralDecomposition, f: Callable[[float], float]) -> Operator:
    """Functional calculus: ``sum_i f(lambda_i) P_i``."""
    out = np.zeros((d.dim, d.dim), dtype=complex)
    for lam, p in zip(d.eigenvalues, d.projectors):
        try:
            val = f(float(lam))
        except (KeyError, ValueError, ZeroDivisionError) as exc:
            raise FunctionUndefined(f"function undefined at eigenvalue {lam!r}: {exc}") from exc
        if val is None or not np.isfinite(val):
            raise FunctionUndefined(f"function undefined at eigenvalue {lam!r}")
        out += val * p.entries
    return Operator(out)


@dataclass(frozen=True)
class CoarseGraining:
    """Map from refinement eigenvalues to coarse eigenvalues, usable as ``f``."""

    value_map: Mapping[float, float] = field(default_factory=dict)

    def __call__(self, x: float) -> float:
        if x in self.value_map:
            return self.value_map[x]
        keys = np.fromiter(self.value_map.keys(), dtype=float)
        i = int(np.argmin(np.abs(keys - x)))
        if abs(keys[i] - x) <= FUNCTION_TOL * max(1.0, abs(x)):
            return self.value_map[float(keys[i])]
        raise KeyError(f"{x!r} is outside the refinement spectrum")

    def classes(self) -> dict:
        """Coarse value -> list of refinement eigenvalues mapped onto it."""
        out: dict = {}
        for k, v in self.value_map.items():
            out.setdefault(v, []).append(k)
        return out

    def to_json(self) -> list:
        return [[float(k), float(v)] for k, v in self.value_map.items()]


def find_coarse_graining(c: SpectralDecomposition, a,
                         tol: float = FUNCTION_TOL) -> CoarseGraining:
    """Find ``f`` with ``a = f(c)`` for a nondegenerate refinement ``c``.

    Raises
    ------
    DegenerateRefinement
        ``c`` has an eigenvalue of multiplicity > 1.
    NotAFunction
        ``a`` is not diagonal in the eigenbasis of ``c``.
    """
    if not c.is_nondegenerate:
        raise DegenerateRefinement(f"refinement multiplicities {c.multiplicities} are not all 1")
    m = as_matrix(a)
    if m.shape[0] != c.dim:
        raise DimensionMismatch(f"dimensions differ: {c.dim} vs {m.shape[0]}")
    basis = c.eigenbasis()
    in_basis = basis.conj().T @ m @ basis
    diag = np.diag(in_basis)
    off = in_basis - np.diag(diag)
    off_dev = float(np.max(np.abs(off))) if off.size else 0.0
    imag_dev = float(np.max(np.abs(diag.imag)))
    if off_dev > tol or imag_dev > tol:
        raise NotAFunction(
            f"operator is not diagonal in the refinement eigenbasis "
            f"(off-diagonal {off_dev:.3e}, imaginary diagonal {imag_dev:.3e})")
    values = _snap(diag.real)
    cg = CoarseGraining({float(lam): float(val)
                         for lam, val in zip(c.eigenvalues, values)})
    err = float(np.max(np.abs(apply_function(c, cg).entries - m)))
    if err > tol:
        raise NotAFunction(f"functional-calculus reconstruction error {err:.3e}")
    return cg


def _snap(values: np.ndarray, cluster_tol: float = DEFAULT_CLUSTER_TOL) -> np.ndarray:
    # equal coarse eigenvalues must map to one float so classes() groups them
    order = np.argsort(values, kind="stable")
    w = values[order]
    scale = max(1.0, float(np.max(np.abs(w))))
    breaks = np.flatnonzero(np.diff(w) > cluster_tol * scale) + 1
    out = np.empty_like(values)
    for g in np.split(np.arange(len(w)), breaks):
        out[order[g]] = np.mean(w[g])
    return out


def commutator_norm(a, b) -> float:
    """Largest entry magnitude of ``ab - ba``."""
    ma, mb = as_matrix(a), as_matrix(b)
    if ma.shape != mb.shape:
        raise DimensionMismatch(f"dimensions differ: {ma.shape[0]} vs {mb.shape[0]}")
    return float(np.max(np.abs(ma @ mb - mb @ ma)))


def decomposition_from_projectors(eigenvalues: Sequence[float], projectors: Sequence,
                                  label: str | None = None) -> SpectralDecomposition:
    """Assemble a decomposition from known (exact) projectors, sorting by eigenvalue."""
    order = np.argsort(np.asarray(eigenvalues, dtype=float), kind="stable")
    ev = [float(eigenvalues[i]) for i in order]
    ps = [projectors[i] if isinstance(projectors[i], Operator) else Operator(projectors[i])
          for i in order]
    mults = [int(round(np.trace(p.entries).real)) for p in ps]
    op = Operator(sum(lam * p.entries for lam, p in zip(ev, ps)))
    return SpectralDecomposition(np.array(ev), tuple(ps), tuple(mults), operator=op, label=label)


def lift(d: SpectralDecomposition, other_dim: int, side: int = 1,
         label: str | None = None) -> SpectralDecomposition:
    """Embed a local decomposition as ``A (x) I`` (side 1) or ``I (x) A`` (side 2)."""
    eye = np.eye(other_dim)
    if side == 1:
        ps = [np.kron(p.entries, eye) for p in d.projectors]
    elif side == 2:
        ps = [np.kron(eye, p.entries) for p in d.projectors]
    else:
        raise ValueError(f"side must be 1 or 2, got {side!r}")
    if label is None and d.label:
        label = f"{d.label}(x)I" if side == 1 else f"I(x){d.label}"
    return decomposition_from_projectors(list(d.eigenvalues), ps, label=label)
