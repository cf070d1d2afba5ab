"""Dense state-vector and density-matrix primitives.

Everything here works on small labeled tensor products (total dimension of
a few dozen at most), so plain dense numpy arrays are used throughout.
Computational-basis order is most-significant-first in layout order.
"""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

ALGEBRA_TOL = 1e-12
PHASE_TOL = 1e-9
EIGEN_TOL = 1e-10

SQRT_HALF = 1.0 / np.sqrt(2.0)


class QuantumError(ValueError):
    """Raised for malformed states, operators, layouts or bases."""


class SubsystemLayout:
    """Ordered, uniquely named subsystems with their dimensions."""

    __slots__ = ("names", "dims", "total", "_index")

    def __init__(self, entries: Iterable[tuple[str, int]]):
        entries = tuple(entries)
        names = tuple(name for name, _ in entries)
        dims = tuple(int(dim) for _, dim in entries)
        if len(set(names)) != len(names):
            raise QuantumError(f"duplicate subsystem id in {names}")
        if any(dim < 1 for dim in dims):
            raise QuantumError(f"subsystem dimensions must be positive: {dims}")
        self.names = names
        self.dims = dims
        self.total = int(np.prod(dims, dtype=np.int64)) if dims else 1
        self._index = {name: i for i, name in enumerate(names)}

    @classmethod
    def qubits(cls, *names: str) -> "SubsystemLayout":
        return cls((name, 2) for name in names)

    def __len__(self) -> int:
        return len(self.names)

    def __contains__(self, name: object) -> bool:
        return name in self._index

    def __iter__(self):
        return iter(zip(self.names, self.dims))

    def __eq__(self, other: object) -> bool:
        return isinstance(other, SubsystemLayout) and tuple(self) == tuple(other)

    def __hash__(self) -> int:
        return hash(tuple(self))

    def __repr__(self) -> str:
        inner = ", ".join(f"{n}:{d}" for n, d in self)
        return f"SubsystemLayout({inner})"

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise QuantumError(f"unknown subsystem id {name!r}; layout has {self.names}") from None

    def dim(self, name: str) -> int:
        return self.dims[self.index(name)]

    def sub(self, names: Sequence[str]) -> "SubsystemLayout":
        return SubsystemLayout((name, self.dim(name)) for name in names)

    def concat(self, other: "SubsystemLayout") -> "SubsystemLayout":
        return _concat(self, other)


@functools.lru_cache(maxsize=256)
def _concat(a: SubsystemLayout, b: SubsystemLayout) -> SubsystemLayout:
    return SubsystemLayout(tuple(a) + tuple(b))


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class StateVector:
    """Unit-norm ket over a :class:`SubsystemLayout`."""

    layout: SubsystemLayout
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = self.amplitudes
        if not (isinstance(amps, np.ndarray) and amps.dtype == np.complex128
                and amps.ndim == 1 and not amps.flags.writeable):
            amps = np.array(amps, dtype=np.complex128).reshape(-1)
        if amps.size != self.layout.total:
            raise QuantumError(
                f"{amps.size} amplitudes do not match layout dimension {self.layout.total}"
            )
        norm = np.sqrt(np.vdot(amps, amps).real)
        # a NaN or Inf amplitude makes the norm non-finite
        if not np.isfinite(norm):
            raise QuantumError("state amplitudes must be finite")
        if abs(norm - 1.0) > ALGEBRA_TOL:
            raise QuantumError(f"state is not normalized (norm={norm!r})")
        object.__setattr__(self, "amplitudes", _frozen(amps))

    @classmethod
    def from_unnormalized(cls, layout: SubsystemLayout, amplitudes,
                          norm: float | None = None) -> "StateVector":
        amps = np.asarray(amplitudes, dtype=np.complex128).reshape(-1)
        if norm is None:
            norm = np.sqrt(np.vdot(amps, amps).real)
        if norm == 0.0:
            raise QuantumError("cannot normalize the zero vector")
        return cls(layout, amps / norm)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def inner(self, other: "StateVector") -> complex:
        """<self|other>."""
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def tensor_view(self) -> np.ndarray:
        return self.amplitudes.reshape(self.layout.dims)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian, positive semidefinite, unit-trace operator."""

    layout: SubsystemLayout
    matrix: np.ndarray

    def __post_init__(self):
        mat = np.array(self.matrix, dtype=np.complex128)
        n = self.layout.total
        if mat.shape != (n, n):
            raise QuantumError(f"density matrix shape {mat.shape} does not match layout ({n})")
        if not np.all(np.isfinite(mat)):
            raise QuantumError("density matrix entries must be finite")
        if np.max(np.abs(mat - mat.conj().T), initial=0.0) > ALGEBRA_TOL:
            raise QuantumError("density matrix is not Hermitian")
        trace = np.trace(mat)
        if abs(trace - 1.0) > ALGEBRA_TOL:
            raise QuantumError(f"density matrix trace is {trace!r}, expected 1")
        if np.min(np.linalg.eigvalsh(mat)) < -EIGEN_TOL:
            raise QuantumError("density matrix has a negative eigenvalue")
        object.__setattr__(self, "matrix", _frozen(mat))

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))


@dataclass(frozen=True, eq=False)
class UnitaryOp:
    """A unitary matrix acting on the subsystems named in ``layout``."""

    layout: SubsystemLayout
    matrix: np.ndarray

    def __post_init__(self):
        mat = np.array(self.matrix, dtype=np.complex128)
        n = self.layout.total
        if mat.shape != (n, n):
            raise QuantumError(f"operator shape {mat.shape} does not match layout ({n})")
        if np.max(np.abs(mat @ mat.conj().T - np.eye(n))) > ALGEBRA_TOL:
            raise QuantumError("operator is not unitary within tolerance")
        object.__setattr__(self, "matrix", _frozen(mat))


class BellLabel(enum.Enum):
    """Bell states in the fixed outcome order used everywhere."""

    PsiPlus = 0
    PsiMinus = 1
    PhiPlus = 2
    PhiMinus = 3

    @property
    def family(self) -> str:
        return "psi" if self in (BellLabel.PsiPlus, BellLabel.PsiMinus) else "phi"

    @property
    def sign(self) -> int:
        return 1 if self in (BellLabel.PsiPlus, BellLabel.PhiPlus) else -1


BELL_ORDER: tuple[BellLabel, ...] = tuple(BellLabel)

_BELL_AMPLITUDES = {
    BellLabel.PsiPlus: (0.0, SQRT_HALF, SQRT_HALF, 0.0),
    BellLabel.PsiMinus: (0.0, SQRT_HALF, -SQRT_HALF, 0.0),
    BellLabel.PhiPlus: (SQRT_HALF, 0.0, 0.0, SQRT_HALF),
    BellLabel.PhiMinus: (SQRT_HALF, 0.0, 0.0, -SQRT_HALF),
}


@functools.lru_cache(maxsize=64)
def make_bell(label: BellLabel, names: tuple[str, str] = ("travel", "home")) -> StateVector:
    # StateVector is immutable, so sharing one instance per (label, names) is safe
    return StateVector(SubsystemLayout.qubits(*names), _BELL_AMPLITUDES[label])


def bell_basis(names: tuple[str, str] = ("travel", "home")) -> list[StateVector]:
    return [make_bell(label, names) for label in BELL_ORDER]


def basis_state(layout: SubsystemLayout, *indices: int) -> StateVector:
    """Computational basis ket |i0 i1 ...> on ``layout``."""
    if len(indices) != len(layout):
        raise QuantumError("one index per subsystem is required")
    amps = np.zeros(layout.total, dtype=np.complex128)
    amps[np.ravel_multi_index(indices, layout.dims)] = 1.0
    return StateVector(layout, amps)


def qubit(name: str, value: int) -> StateVector:
    return basis_state(SubsystemLayout.qubits(name), value)


PAULI_Z = np.diag([1.0, -1.0]).astype(np.complex128)
PAULI_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=np.complex128)
IDENTITY_2 = np.eye(2, dtype=np.complex128)


def sigma_z(name: str = "travel") -> UnitaryOp:
    return UnitaryOp(SubsystemLayout.qubits(name), PAULI_Z)


def tensor(a: StateVector, b: StateVector) -> StateVector:
    layout = a.layout.concat(b.layout)  # rejects duplicate ids
    return StateVector(layout, np.outer(a.amplitudes, b.amplitudes).ravel())


def _target_axes(layout: SubsystemLayout, targets: Sequence[str]) -> list[int]:
    if not targets:
        raise QuantumError("at least one target subsystem is required")
    axes = [layout.index(t) for t in targets]
    if len(set(axes)) != len(axes):
        raise QuantumError(f"repeated target in {tuple(targets)}")
    return axes


def _apply_local(matrix: np.ndarray, amplitudes: np.ndarray, layout: SubsystemLayout,
                 axes: list[int]) -> np.ndarray:
    tdims = [layout.dims[a] for a in axes]
    k = len(axes)
    op = np.asarray(matrix).reshape(tdims + tdims)
    psi = amplitudes.reshape(layout.dims)
    out = np.tensordot(op, psi, axes=(list(range(k, 2 * k)), axes))
    # tensordot puts the target axes first; move them back into place
    out = np.moveaxis(out, list(range(k)), axes)
    return out.reshape(-1)


def _embed_uncached(matrix: np.ndarray, layout: SubsystemLayout, targets: tuple) -> np.ndarray:
    axes = _target_axes(layout, targets)
    tdim = int(np.prod([layout.dims[a] for a in axes]))
    if np.shape(matrix) != (tdim, tdim):
        raise QuantumError(f"operator shape {np.shape(matrix)} does not match targets ({tdim})")
    cols = [_apply_local(matrix, col, layout, axes)
            for col in np.eye(layout.total, dtype=np.complex128)]
    out = np.array(cols).T
    out.setflags(write=False)
    return out


_EMBED_CACHE: dict = {}
_EMBED_CACHE_MAX = 4096


def _matrix_key(matrix: np.ndarray) -> tuple:
    # read-only arrays cannot change under us; the caches keep them alive so ids stay unique
    if isinstance(matrix, np.ndarray) and not matrix.flags.writeable:
        return ("id", id(matrix))
    m = np.ascontiguousarray(matrix, dtype=np.complex128)
    return m.shape, m.tobytes()


def embed(matrix: np.ndarray, layout: SubsystemLayout, targets: Sequence[str]) -> np.ndarray:
    """Full-space matrix of an operator acting on ``targets`` (identity elsewhere).

    Results are memoized; every space here has dimension <= 16 or so, so one
    dense matvec beats repeated tensordot/moveaxis on the hot path.
    """
    targets = tuple(targets)
    key = (layout, targets, _matrix_key(matrix))
    full = _EMBED_CACHE.get(key)
    if full is None:
        if len(_EMBED_CACHE) >= _EMBED_CACHE_MAX:
            _EMBED_CACHE.clear()
        full = _embed_uncached(matrix, layout, targets)
        _EMBED_CACHE[key] = (full, matrix)
        return full
    return full[0]


def apply_operator(matrix: np.ndarray, amplitudes: np.ndarray, layout: SubsystemLayout,
                   targets: Sequence[str]) -> np.ndarray:
    """Apply an arbitrary matrix to ``targets`` of a raw amplitude vector.

    No normalization or unitarity checks; used for unitaries and projectors alike.
    """
    return embed(matrix, layout, targets) @ amplitudes


def apply_unitary(u: UnitaryOp, s: StateVector, targets: Sequence[str]) -> StateVector:
    tdims = tuple(s.layout.dim(t) for t in targets)
    if tdims != u.layout.dims:
        raise QuantumError(f"operator dims {u.layout.dims} do not match targets {tdims}")
    return StateVector(s.layout, apply_operator(u.matrix, s.amplitudes, s.layout, targets))


def density_of(s: StateVector) -> DensityMatrix:
    return DensityMatrix(s.layout, np.outer(s.amplitudes, s.amplitudes.conj()))


def reduced_matrix(matrix: np.ndarray, layout: SubsystemLayout, keep: Sequence[str]) -> np.ndarray:
    """Partial trace of a raw (possibly unnormalized) operator."""
    keep_axes = _target_axes(layout, keep)
    n = len(layout)
    drop = [i for i in range(n) if i not in keep_axes]
    rho = np.asarray(matrix).reshape(layout.dims + layout.dims)
    # trace out dropped axes from the highest index down so earlier indices stay valid
    for ax in sorted(drop, reverse=True):
        rho = np.trace(rho, axis1=ax, axis2=ax + rho.ndim // 2)
    remaining = [i for i in range(n) if i in keep_axes]
    # reorder the surviving axes into the order requested by ``keep``
    order = [remaining.index(a) for a in keep_axes]
    m = len(order)
    rho = np.transpose(rho, order + [m + o for o in order])
    d = int(np.prod([layout.dims[a] for a in keep_axes]))
    return rho.reshape(d, d)


def partial_trace(d: DensityMatrix, keep: Sequence[str]) -> DensityMatrix:
    return DensityMatrix(d.layout.sub(keep), reduced_matrix(d.matrix, d.layout, keep))


def check_orthonormal(vectors: Sequence[np.ndarray], tol: float = ALGEBRA_TOL) -> None:
    mat = np.array(vectors, dtype=np.complex128)
    gram = mat.conj() @ mat.T
    if np.max(np.abs(gram - np.eye(len(vectors)))) > tol:
        raise QuantumError("basis vectors are not orthonormal")


def _basis_matrix(basis: Sequence[StateVector], dim: int) -> np.ndarray:
    if len(basis) != dim:
        raise QuantumError(f"basis has {len(basis)} vectors but the space has dimension {dim}")
    vecs = []
    for b in basis:
        if b.layout.total != dim:
            raise QuantumError("basis vector dimension does not match target space")
        vecs.append(b.amplitudes)
    check_orthonormal(vecs)
    return np.array(vecs)


def sample_index(probabilities: Sequence[float], rand: np.random.Generator) -> int:
    """Inverse-CDF draw over the fixed outcome order using one uniform."""
    probs = [float(p) for p in probabilities]
    u = rand.random() * sum(probs)
    acc = 0.0
    last = 0
    for i, p in enumerate(probs):
        if p <= 0.0:
            continue
        acc += p
        last = i
        if u < acc:
            return i
    # u landed on the top edge after rounding
    return last


def _check_probabilities(probs: np.ndarray) -> None:
    total = float(np.sum(probs))
    if abs(total - 1.0) > ALGEBRA_TOL:
        raise QuantumError(f"outcome probabilities sum to {total!r}")


_PROJECTOR_CACHE: dict = {}
_BASIS_CACHE: dict = {}


def _projector_stack(projectors: Sequence[np.ndarray], layout: SubsystemLayout,
                     targets: tuple) -> np.ndarray:
    key = (layout, targets, tuple(_matrix_key(p) for p in projectors))
    stack = _PROJECTOR_CACHE.get(key)
    if stack is None:
        stack = _build_projector_stack(projectors, layout, targets)
        if len(_PROJECTOR_CACHE) >= _EMBED_CACHE_MAX:
            _PROJECTOR_CACHE.clear()
        _PROJECTOR_CACHE[key] = (stack, tuple(projectors))
        return stack
    return stack[0]


def _build_projector_stack(projectors: Sequence[np.ndarray], layout: SubsystemLayout,
                           targets: tuple) -> np.ndarray:
    dim = int(np.prod([layout.dim(t) for t in targets]))
    total = np.zeros((dim, dim), dtype=np.complex128)
    for p in projectors:
        if np.shape(p) != (dim, dim):
            raise QuantumError("projector shape does not match targets")
        if np.max(np.abs(p @ p - p)) > 1e-10 or np.max(np.abs(p - np.conj(p).T)) > 1e-10:
            raise QuantumError("measurement operator is not an orthogonal projector")
        total = total + p
    if np.max(np.abs(total - np.eye(dim))) > ALGEBRA_TOL:
        raise QuantumError("projectors do not sum to the identity")
    stack = np.array([_embed_uncached(p, layout, targets) for p in projectors])
    stack.setflags(write=False)
    return stack


def _collapse(s: StateVector, stack: np.ndarray, rand: np.random.Generator) -> tuple[int, StateVector]:
    branches = stack @ s.amplitudes
    probs = np.einsum("ki,ki->k", branches.conj(), branches).real
    _check_probabilities(probs)
    k = sample_index(probs, rand)
    return k, StateVector.from_unnormalized(s.layout, branches[k], np.sqrt(probs[k]))


def measure_projective(s: StateVector, targets: Sequence[str], projectors: Sequence[np.ndarray],
                       rand: np.random.Generator) -> tuple[int, StateVector]:
    """Projective measurement with Lüders collapse; projectors must resolve the identity."""
    return _collapse(s, _projector_stack(projectors, s.layout, tuple(targets)), rand)


def basis_projectors(basis: Sequence[StateVector], dim: int) -> list[np.ndarray]:
    bmat = _basis_matrix(basis, dim)
    return [np.outer(b, b.conj()) for b in bmat]


def measure_in_basis(s: StateVector, targets: Sequence[str], basis: Sequence[StateVector],
                     rand: np.random.Generator) -> tuple[int, StateVector]:
    """Rank-one projective measurement of ``targets`` in an orthonormal basis."""
    targets = tuple(targets)
    # basis kets are immutable, so identity is a safe cache key while we hold them
    key = (s.layout, targets, tuple(map(id, basis)))
    hit = _BASIS_CACHE.get(key)
    if hit is None:
        dim = int(np.prod([s.layout.dim(t) for t in targets]))
        stack = _build_projector_stack(basis_projectors(basis, dim), s.layout, targets)
        if len(_BASIS_CACHE) >= _EMBED_CACHE_MAX:
            _BASIS_CACHE.clear()
        hit = _BASIS_CACHE[key] = (stack, tuple(basis))
    return _collapse(s, hit[0], rand)


def born_probabilities(d: DensityMatrix, basis: Sequence[StateVector]) -> list[float]:
    bmat = _basis_matrix(basis, d.layout.total)
    probs = np.einsum("ki,ij,kj->k", bmat.conj(), d.matrix, bmat).real
    _check_probabilities(probs)
    return [float(p) for p in np.clip(probs, 0.0, 1.0)]


def phase_equivalent(a: StateVector, b: StateVector, tol: float = PHASE_TOL) -> bool:
    """True when the two kets differ only by a global phase."""
    if a.layout.total != b.layout.total:
        return False
    return abs(abs(a.inner(b)) - 1.0) <= tol


def complete_basis(vectors: Sequence[np.ndarray], dim: int) -> list[np.ndarray]:
    """Extend orthonormal ``vectors`` to a full basis by Gram-Schmidt over e_0, e_1, ..."""
    basis = [np.asarray(v, dtype=np.complex128) for v in vectors]
    if basis:
        check_orthonormal(basis)
    for candidate in np.eye(dim, dtype=np.complex128):
        if len(basis) == dim:
            break
        v = candidate.copy()
        for _ in range(2):  # second pass for numerical orthogonality
            for b in basis:
                v = v - np.vdot(b, v) * b
        norm = np.linalg.norm(v)
        if norm > 1e-8:
            basis.append(v / norm)
    return basis
