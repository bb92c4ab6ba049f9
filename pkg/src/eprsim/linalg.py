"""Dense complex linear algebra: states, operators, tensor products, partial traces.

All containers are immutable: the wrapped arrays are private read-only copies.
Composite systems use the row-major convention ``index = i1 * d2 + i2``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import DimensionMismatch, InvalidState, NotHermitian

#: Largest Hilbert-space dimension accepted by the containers.
MAX_DIM = 64

HERMITIAN_TOL = 1e-10
STATE_TOL = 1e-10


def _frozen(arr) -> np.ndarray:
    out = np.array(arr, dtype=complex, copy=True)
    out.setflags(write=False)
    return out


def _check_dim(dim: int) -> None:
    if dim < 1:
        raise DimensionMismatch(f"dimension must be positive, got {dim}")
    if dim > MAX_DIM:
        raise DimensionMismatch(
            f"dimension {dim} exceeds the configured cap MAX_DIM={MAX_DIM}")


@dataclass(frozen=True, eq=False)
class Operator:
    """Square complex matrix acting on a ``dim``-dimensional space."""

    entries: np.ndarray

    def __post_init__(self):
        m = _frozen(self.entries)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionMismatch(f"operator must be square, got shape {m.shape}")
        _check_dim(m.shape[0])
        object.__setattr__(self, "entries", m)

    @classmethod
    def hermitian(cls, entries, tol: float = HERMITIAN_TOL) -> "Operator":
        """Build an operator and validate Hermiticity (no silent repair)."""
        op = cls(entries)
        if not op.is_hermitian(tol):
            dev = hermitian_deviation(op.entries)
            raise NotHermitian(f"max|A - A^dagger| = {dev:.3e} exceeds {tol:.1e}")
        return op

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def is_hermitian(self, tol: float = HERMITIAN_TOL) -> bool:
        return hermitian_deviation(self.entries) <= tol

    def adjoint(self) -> "Operator":
        return Operator(self.entries.conj().T)

    def __matmul__(self, other):
        if isinstance(other, Operator):
            return Operator(self.entries @ other.entries)
        return self.entries @ np.asarray(other)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)

    def __repr__(self):
        return f"Operator(dim={self.dim})"


@dataclass(frozen=True, eq=False)
class PureState:
    """Normalized state vector."""

    amplitudes: np.ndarray

    def __post_init__(self):
        v = _frozen(self.amplitudes)
        if v.ndim != 1:
            raise DimensionMismatch(f"state vector must be 1-D, got shape {v.shape}")
        _check_dim(v.shape[0])
        norm = np.linalg.norm(v)
        if abs(norm - 1.0) > STATE_TOL:
            raise InvalidState(f"state norm {norm!r} differs from 1 by more than {STATE_TOL}")
        object.__setattr__(self, "amplitudes", v)

    @classmethod
    def normalized(cls, vec) -> "PureState":
        v = np.asarray(vec, dtype=complex)
        n = np.linalg.norm(v)
        if n == 0:
            raise InvalidState("cannot normalize the zero vector")
        return cls(v / n)

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]

    def density(self) -> "DensityOperator":
        return DensityOperator(np.outer(self.amplitudes, self.amplitudes.conj()))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.amplitudes, dtype=dtype)

    def __repr__(self):
        return f"PureState(dim={self.dim})"


@dataclass(frozen=True, eq=False)
class DensityOperator:
    """Hermitian, unit-trace, positive semidefinite matrix."""

    matrix: np.ndarray

    def __post_init__(self):
        m = _frozen(self.matrix)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionMismatch(f"density operator must be square, got shape {m.shape}")
        _check_dim(m.shape[0])
        if hermitian_deviation(m) > STATE_TOL:
            raise InvalidState("density operator is not Hermitian")
        tr = np.trace(m).real
        if abs(tr - 1.0) > STATE_TOL:
            raise InvalidState(f"density operator trace {tr!r} differs from 1")
        lo = np.linalg.eigvalsh((m + m.conj().T) / 2)[0]
        if lo < -STATE_TOL:
            raise InvalidState(f"density operator has negative eigenvalue {lo:.3e}")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def purity(self) -> float:
        return float(np.trace(self.matrix @ self.matrix).real)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.matrix, dtype=dtype)

    def __repr__(self):
        return f"DensityOperator(dim={self.dim})"


StateLike = Union[PureState, DensityOperator]
MatrixLike = Union[Operator, DensityOperator, np.ndarray]


def hermitian_deviation(m) -> float:
    m = np.asarray(m)
    return float(np.max(np.abs(m - m.conj().T))) if m.size else 0.0


def as_matrix(x) -> np.ndarray:
    """Return the underlying 2-D complex array of an operator-like value."""
    if isinstance(x, Operator):
        return x.entries
    if isinstance(x, DensityOperator):
        return x.matrix
    m = np.asarray(x, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {m.shape}")
    return m


def as_vector(x) -> np.ndarray:
    if isinstance(x, PureState):
        return x.amplitudes
    v = np.asarray(x, dtype=complex)
    if v.ndim != 1:
        raise DimensionMismatch(f"expected a vector, got shape {v.shape}")
    return v


def symmetrize(x) -> Operator:
    """Explicit Hermitian repair: returns (A + A^dagger) / 2."""
    m = as_matrix(x)
    return Operator((m + m.conj().T) / 2)


def tensor(a, b):
    """Kronecker product ``a (x) b`` with subsystem 1 as the outer index.

    Works for operators (returns :class:`Operator`) and for pure states
    (returns :class:`PureState`).
    """
    if isinstance(a, PureState) and isinstance(b, PureState):
        return PureState(np.kron(a.amplitudes, b.amplitudes))
    if isinstance(a, DensityOperator) and isinstance(b, DensityOperator):
        return DensityOperator(np.kron(a.matrix, b.matrix))
    return Operator(np.kron(as_matrix(a), as_matrix(b)))


def identity(dim: int) -> Operator:
    return Operator(np.eye(dim))


def _factor(dim: int, d1: int, d2: int) -> None:
    if d1 < 1 or d2 < 1 or d1 * d2 != dim:
        raise DimensionMismatch(f"dimension {dim} does not factor as {d1} x {d2}")


def partial_trace(rho, keep: int, d1: int, d2: int) -> DensityOperator:
    """Reduced density operator of subsystem ``keep`` (1 or 2) of a ``d1 x d2`` system."""
    m = as_matrix(rho)
    _factor(m.shape[0], d1, d2)
    t = m.reshape(d1, d2, d1, d2)
    if keep == 1:
        red = np.einsum("ijkj->ik", t)
    elif keep == 2:
        red = np.einsum("ijil->jl", t)
    else:
        raise ValueError(f"keep must be 1 or 2, got {keep!r}")
    return DensityOperator(red)


def to_density(state) -> DensityOperator:
    if isinstance(state, DensityOperator):
        return state
    if isinstance(state, PureState):
        return state.density()
    arr = np.asarray(state, dtype=complex)
    if arr.ndim == 1:
        return PureState(arr).density()
    return DensityOperator(arr)


def state_distance(a, b) -> float:
    """Trace distance ``0.5 * ||a - b||_1``; pure states are promoted to projectors."""
    ma = as_matrix(to_density(a))
    mb = as_matrix(to_density(b))
    if ma.shape != mb.shape:
        raise DimensionMismatch(f"dimensions differ: {ma.shape[0]} vs {mb.shape[0]}")
    diff = ma - mb
    ev = np.linalg.eigvalsh((diff + diff.conj().T) / 2)
    return float(0.5 * np.sum(np.abs(ev)))


# --- standard operators -----------------------------------------------------

SIGMA_X = Operator(np.array([[0, 1], [1, 0]]))
SIGMA_Y = Operator(np.array([[0, -1j], [1j, 0]]))
SIGMA_Z = Operator(np.array([[1, 0], [0, -1]]))


def spin_along(theta: float) -> Operator:
    """Spin observable ``cos(theta) sigma_z + sin(theta) sigma_x`` in the x-z plane."""
    return Operator(np.cos(theta) * SIGMA_Z.entries + np.sin(theta) * SIGMA_X.entries)


def basis_state(index: int, dim: int) -> PureState:
    v = np.zeros(dim, dtype=complex)
    v[index] = 1.0
    return PureState(v)


def singlet() -> PureState:
    """(|01> - |10>) / sqrt(2)."""
    return PureState(np.array([0, 1, -1, 0]) / np.sqrt(2))


def maximally_entangled(d: int) -> PureState:
    """sum_j |j>|j> / sqrt(d)."""
    return PureState(np.eye(d).reshape(-1) / np.sqrt(d))


# --- random instances ---------------------------------------------------------

def random_state(dim: int, rng: np.random.Generator) -> PureState:
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return PureState.normalized(v)


def random_density(dim: int, rng: np.random.Generator, rank: int | None = None) -> DensityOperator:
    """Ginibre-distributed density operator of the given rank (full rank by default)."""
    k = dim if rank is None else rank
    g = rng.normal(size=(dim, k)) + 1j * rng.normal(size=(dim, k))
    m = g @ g.conj().T
    m = m / np.trace(m).real
    return DensityOperator((m + m.conj().T) / 2)


def random_hermitian(dim: int, rng: np.random.Generator) -> Operator:
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return Operator((g + g.conj().T) / 2)


# --- JSON interchange -------------------------------------------------------

def _encode_complex(z) -> list:
    return [float(z.real), float(z.imag)]


def _decode_complex(item, field: str) -> complex:
    if isinstance(item, (int, float)) and not isinstance(item, bool):
        return complex(item)
    if (isinstance(item, (list, tuple)) and len(item) == 2
            and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in item)):
        return complex(item[0], item[1])
    raise ValueError(f"{field}: expected [re, im] pair, got {item!r}")


def matrix_to_json(m) -> list:
    m = np.asarray(m)
    return [[_encode_complex(z) for z in row] for row in m]


def vector_to_json(v) -> list:
    return [_encode_complex(z) for z in np.asarray(v)]


def to_json(x) -> dict:
    """Encode an operator or state as ``{"dim": n, "entries": [...]}``."""
    if isinstance(x, Operator):
        return {"kind": "operator", "dim": x.dim, "entries": matrix_to_json(x.entries)}
    if isinstance(x, DensityOperator):
        return {"kind": "density", "dim": x.dim, "entries": matrix_to_json(x.matrix)}
    if isinstance(x, PureState):
        return {"kind": "state", "dim": x.dim, "entries": vector_to_json(x.amplitudes)}
    raise TypeError(f"cannot encode {type(x).__name__}")


def entries_from_json(obj, field: str = "entries") -> np.ndarray:
    """Decode the ``entries`` payload of a JSON object into a complex array.

    Raises ValueError with the offending field path on malformed input.
    """
    if not isinstance(obj, dict):
        raise ValueError(f"{field}: expected an object with 'dim' and 'entries'")
    if "entries" not in obj:
        raise ValueError(f"{field}.entries: missing")
    raw = obj["entries"]
    if not isinstance(raw, list) or not raw:
        raise ValueError(f"{field}.entries: expected a non-empty array")
    if isinstance(raw[0], list) and raw[0] and isinstance(raw[0][0], list):
        rows = []
        for i, row in enumerate(raw):
            if not isinstance(row, list):
                raise ValueError(f"{field}.entries[{i}]: expected a row array")
            rows.append([_decode_complex(z, f"{field}.entries[{i}][{j}]")
                         for j, z in enumerate(row)])
        if len({len(r) for r in rows}) != 1:
            raise ValueError(f"{field}.entries: ragged rows")
        arr = np.array(rows, dtype=complex)
    else:
        arr = np.array([_decode_complex(z, f"{field}.entries[{i}]")
                        for i, z in enumerate(raw)], dtype=complex)
    if "dim" in obj:
        dim = obj["dim"]
        if not isinstance(dim, int) or dim != arr.shape[0]:
            raise ValueError(f"{field}.dim: {dim!r} does not match entries of length {arr.shape[0]}")
    return arr


def from_json(obj, field: str = "value", kind: str | None = None):
    """Decode a JSON object into an Operator, PureState or DensityOperator.

    ``kind`` overrides the object's own ``kind`` key; without either, vectors
    become states and matrices become operators.
    """
    arr = entries_from_json(obj, field)
    kind = kind or obj.get("kind")
    try:
        if arr.ndim == 1:
            if kind not in (None, "state"):
                raise ValueError(f"{field}: kind {kind!r} needs a matrix")
            return PureState(arr)
        if kind == "density":
            return DensityOperator(arr)
        if kind == "state":
            raise ValueError(f"{field}: kind 'state' needs a vector")
        return Operator(arr)
    except (InvalidState, DimensionMismatch) as exc:
        raise ValueError(f"{field}: {exc}") from exc


def vectors_close_up_to_phase(u: Sequence[complex], v: Sequence[complex]) -> float:
    """Return ``1 - |<u, v>|`` for unit vectors (0 when parallel)."""
    return float(1.0 - abs(np.vdot(np.asarray(u), np.asarray(v))))
