"""Finite-dimensional quantum states: construction, products, partial traces, spectra.

Subsystems are ordered as listed in ``dims``; the first entry is the most
significant tensor factor (``np.kron`` ordering). All partial traces take an
explicit list of subsystem indices to keep, so any marginal of a tripartite
state (AB, AC, BC, BA, ...) can be produced.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

NORM_TOL = 1e-12
HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
PSD_TOL = 1e-10
EIG_CLAMP = 1e-12
MAX_TOTAL_DIM = 64


class StateError(ValueError):
    """Raised when a state or an operation on it is invalid."""


def _check_dims(dims: Sequence[int], length: int, max_dim: int | None) -> tuple[int, ...]:
    dims = tuple(int(d) for d in dims)
    if not dims or any(d < 1 for d in dims):
        raise StateError(f"subsystem dimensions must be positive, got {dims}")
    if int(np.prod(dims)) != length:
        raise StateError(f"dims {dims} do not factor a space of dimension {length}")
    if max_dim is not None and length > max_dim:
        raise StateError(f"total dimension {length} exceeds the cap {max_dim}")
    return dims


@dataclass(frozen=True, eq=False)
class PureState:
    amplitudes: np.ndarray
    dims: tuple[int, ...]
    max_dim: int | None = field(default=MAX_TOTAL_DIM, repr=False)

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        dims = _check_dims(self.dims, amps.size, self.max_dim)
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > NORM_TOL:
            raise StateError(f"state is not normalized (norm={norm!r})")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "dims", dims)

    @classmethod
    def from_vector(cls, vec, dims, normalize: bool = True, **kw) -> "PureState":
        vec = np.asarray(vec, dtype=complex).reshape(-1)
        if normalize:
            norm = np.linalg.norm(vec)
            if norm == 0:
                raise StateError("cannot normalize the zero vector")
            vec = vec / norm
        return cls(vec, tuple(dims), **kw)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    @property
    def tensor_(self) -> np.ndarray:
        """Amplitudes reshaped to one axis per subsystem."""
        return self.amplitudes.reshape(self.dims)

    def density(self) -> "DensityMatrix":
        return DensityMatrix(np.outer(self.amplitudes, self.amplitudes.conj()), self.dims, self.max_dim)

    def regroup(self, groups: Sequence[Sequence[int]]) -> "PureState":
        """View the state with subsystems merged, e.g. ``[[0], [1, 2]]`` for A|BC."""
        order = [i for g in groups for i in g]
        if sorted(order) != list(range(len(self.dims))):
            raise StateError(f"groups {groups} do not partition {len(self.dims)} subsystems")
        t = np.transpose(self.tensor_, order)
        new_dims = tuple(int(np.prod([self.dims[i] for i in g])) for g in groups)
        return PureState(t.reshape(-1), new_dims, self.max_dim)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    matrix: np.ndarray
    dims: tuple[int, ...]
    max_dim: int | None = field(default=MAX_TOTAL_DIM, repr=False)

    def __post_init__(self):
        mat = np.array(self.matrix, dtype=complex)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise StateError(f"density matrix must be square, got shape {mat.shape}")
        dims = _check_dims(self.dims, mat.shape[0], self.max_dim)
        herm = np.max(np.abs(mat - mat.conj().T)) if mat.size else 0.0
        if herm > HERMITIAN_TOL:
            raise StateError(f"matrix is not Hermitian (deviation {herm:.3e})")
        tr = np.trace(mat).real
        if abs(tr - 1.0) > TRACE_TOL:
            raise StateError(f"trace is {tr!r}, expected 1")
        mat = 0.5 * (mat + mat.conj().T)
        lo = np.linalg.eigvalsh(mat)[0]
        if lo < -PSD_TOL:
            raise StateError(f"matrix is not positive semidefinite (min eigenvalue {lo:.3e})")
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)
        object.__setattr__(self, "dims", dims)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def purity(self) -> float:
        return float(np.real(np.vdot(self.matrix, self.matrix)))

    def is_pure(self, tol: float = 1e-9) -> bool:
        return abs(1.0 - self.purity()) <= tol

    def to_pure(self, tol: float = 1e-9) -> PureState:
        """Return the state vector of a pure density matrix (global phase fixed)."""
        if not self.is_pure(tol):
            raise StateError(f"state is not pure (purity {self.purity():.12f})")
        w, v = np.linalg.eigh(self.matrix)
        vec = _fix_phase(v[:, -1])
        return PureState(vec / np.linalg.norm(vec), self.dims, self.max_dim)


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def _fix_phase(vec: np.ndarray) -> np.ndarray:
    """Rotate the global phase so the largest-magnitude amplitude is real positive."""
    k = int(np.argmax(np.abs(vec) - 1e-12 * np.arange(vec.size)))
    a = vec[k]
    if abs(a) == 0:
        return vec
    return vec * (abs(a) / a)


def as_density(state: PureState | DensityMatrix) -> DensityMatrix:
    if isinstance(state, DensityMatrix):
        return state
    if isinstance(state, PureState):
        return state.density()
    raise TypeError(f"expected PureState or DensityMatrix, got {type(state).__name__}")


def ket(index: int | Sequence[int], dims: Sequence[int]) -> PureState:
    """Computational basis state; ``index`` is a flat index or one digit per subsystem."""
    dims = tuple(dims)
    if not isinstance(index, (int, np.integer)):
        index = int(np.ravel_multi_index(tuple(index), dims))
    vec = np.zeros(int(np.prod(dims)), dtype=complex)
    vec[index] = 1.0
    return PureState(vec, dims)


def maximally_mixed(dims: Sequence[int]) -> DensityMatrix:
    n = int(np.prod(dims))
    return DensityMatrix(np.eye(n) / n, tuple(dims))


def tensor(a, b):
    """Kronecker product of two states of the same kind, dims concatenated."""
    if isinstance(a, PureState) and isinstance(b, PureState):
        return PureState(np.kron(a.amplitudes, b.amplitudes), a.dims + b.dims)
    if isinstance(a, DensityMatrix) and isinstance(b, DensityMatrix):
        return DensityMatrix(np.kron(a.matrix, b.matrix), a.dims + b.dims)
    raise TypeError("tensor() needs two PureStates or two DensityMatrices")


def _check_keep(keep: Sequence[int], n: int) -> list[int]:
    keep = [int(k) for k in keep]
    if not keep:
        raise StateError("keep must name at least one subsystem")
    if len(set(keep)) != len(keep) or any(k < 0 or k >= n for k in keep):
        raise StateError(f"invalid subsystem indices {keep} for {n} subsystems")
    return keep


def partial_trace(state: PureState | DensityMatrix, keep: Sequence[int]) -> DensityMatrix:
    """Reduced state on ``keep``; the result lists subsystems in the order given."""
    n = len(state.dims)
    keep = _check_keep(keep, n)
    traced = [i for i in range(n) if i not in keep]
    dk = [state.dims[i] for i in keep]
    dk_tot = int(np.prod(dk))
    if isinstance(state, PureState):
        t = np.transpose(state.tensor_, keep + traced).reshape(dk_tot, -1)
        red = t @ t.conj().T
    else:
        dims = state.dims
        t = state.matrix.reshape(dims + dims)
        perm = keep + traced
        t = np.transpose(t, perm + [n + i for i in perm])
        dt = int(np.prod([dims[i] for i in traced])) if traced else 1
        t = t.reshape(dk_tot, dt, dk_tot, dt)
        red = np.einsum("ajbj->ab", t)
    red = 0.5 * (red + red.conj().T)
    red = red / np.trace(red).real
    return DensityMatrix(red, tuple(dk), state.max_dim)


def spectral(rho: DensityMatrix | np.ndarray) -> Spectrum:
    """Descending eigen-decomposition with eigenvalues clamped into [0, 1]."""
    mat = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    if np.max(np.abs(mat - mat.conj().T)) > HERMITIAN_TOL:
        raise StateError("spectral() needs a Hermitian matrix")
    w, v = np.linalg.eigh(0.5 * (mat + mat.conj().T))
    if w.size and w[0] < -PSD_TOL:
        raise StateError(f"negative eigenvalue {w[0]:.3e}")
    w = np.clip(w[::-1], 0.0, 1.0)
    w[w < EIG_CLAMP] = 0.0
    return Spectrum(w, v[:, ::-1])


def rng_from_seed(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.uint64(int(seed) % 2**64))


def haar_random_pure(dims: Sequence[int], seed: int | np.random.Generator) -> PureState:
    rng = seed if isinstance(seed, np.random.Generator) else rng_from_seed(seed)
    dims = tuple(int(d) for d in dims)
    n = int(np.prod(dims))
    vec = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return PureState(vec / np.linalg.norm(vec), dims)


def haar_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed n x n unitary (QR of a Ginibre matrix with phase correction)."""
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def random_mixed(dim: int, rank: int, seed: int | np.random.Generator, dims: Sequence[int] | None = None) -> DensityMatrix:
    """Marginal of a Haar-random pure state on ``dim x rank``."""
    if not 1 <= rank <= dim:
        raise StateError(f"rank must lie in [1, {dim}], got {rank}")
    psi = haar_random_pure((dim, rank), seed)
    rho = partial_trace(psi, [0])
    return DensityMatrix(rho.matrix, tuple(dims) if dims is not None else (dim,))


CANONICAL_NAMES = ("GHZ", "W", "PRODUCT", "BELL_TENSOR_ZERO")


def canonical_state(name: str, dims: Sequence[int] = (2, 2, 2)) -> PureState:
    name = name.upper()
    dims = tuple(int(d) for d in dims)
    if name == "GHZ":
        if len(dims) != 3 or len(set(dims)) != 1:
            raise StateError(f"GHZ needs equal dims [d, d, d], got {list(dims)}")
        d = dims[0]
        vec = np.zeros(d**3, dtype=complex)
        for i in range(d):
            vec[i * (d * d + d + 1)] = 1.0
        return PureState(vec / np.sqrt(d), dims)
    if name == "W":
        if dims != (2, 2, 2):
            raise StateError(f"W is defined for dims [2, 2, 2], got {list(dims)}")
        vec = np.zeros(8, dtype=complex)
        vec[[1, 2, 4]] = 1 / np.sqrt(3)
        return PureState(vec, dims)
    if name == "PRODUCT":
        return ket(0, dims)
    if name == "BELL_TENSOR_ZERO":
        if len(dims) != 3 or dims[0] != dims[1]:
            raise StateError(f"BELL_TENSOR_ZERO needs dims [d, d, dC], got {list(dims)}")
        d, dc = dims[0], dims[2]
        bell = np.eye(d).reshape(-1) / np.sqrt(d)
        zero = np.zeros(dc)
        zero[0] = 1.0
        return PureState(np.kron(bell, zero), dims)
    raise StateError(f"unknown canonical state {name!r}; expected one of {CANONICAL_NAMES}")


# -- serialization ---------------------------------------------------------

def state_to_dict(state: PureState | DensityMatrix) -> dict:
    data = state.amplitudes if isinstance(state, PureState) else state.matrix
    return {"dims": list(state.dims), "re": data.real.tolist(), "im": data.imag.tolist()}


def state_from_dict(obj: dict, normalize: bool = False) -> PureState | DensityMatrix:
    """Parse ``{dims, re, im}``; a 1-D payload is a pure state, 2-D a density matrix."""
    try:
        dims = [int(d) for d in obj["dims"]]
        re = np.asarray(obj["re"], dtype=float)
        im = np.asarray(obj["im"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise StateError(f"malformed state object: {exc}") from exc
    if re.shape != im.shape:
        raise StateError(f"re/im shapes differ: {re.shape} vs {im.shape}")
    data = re + 1j * im
    if data.ndim == 1:
        if normalize:
            return PureState.from_vector(data, dims)
        return PureState(data, tuple(dims))
    if data.ndim == 2:
        return DensityMatrix(data, tuple(dims))
    raise StateError(f"state payload must be 1-D or 2-D, got {data.ndim}-D")


def dumps_state(state) -> str:
    return json.dumps(state_to_dict(state))


def loads_state(text: str):
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise StateError(f"invalid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise StateError("state JSON must be an object")
    return state_from_dict(obj)
