"""Pure-state decompositions, POVMs, and the measurement/decomposition correspondence.

For a tripartite pure state, a rank-1 POVM on one party steers the other two
into a pure-state decomposition of their joint marginal, and every such
decomposition arises this way. ``povm_to_ensemble`` and ``ensemble_to_povm``
implement both directions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .qstate import (
    DensityMatrix,
    PureState,
    StateError,
    _fix_phase,
    as_density,
    partial_trace,
    spectral,
)

ZERO_WEIGHT = 1e-12
ISOMETRY_TOL = 1e-10
COMPLETENESS_TOL = 1e-9
MIXTURE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class Ensemble:
    """Weighted pure states whose mixture reproduces ``target``."""

    weights: np.ndarray
    states: tuple[PureState, ...]
    target: DensityMatrix

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size != len(self.states) or w.size == 0:
            raise StateError("weights and states must be nonempty and of equal length")
        if np.any(w <= 0):
            raise StateError("ensemble weights must be positive")
        if abs(w.sum() - 1.0) > 1e-10:
            raise StateError(f"ensemble weights sum to {w.sum()!r}")
        if any(s.dims != self.target.dims for s in self.states):
            raise StateError("member dims differ from the target dims")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "states", tuple(self.states))
        err = np.max(np.abs(self.mixture() - self.target.matrix))
        if err > MIXTURE_TOL:
            raise StateError(f"ensemble mixture misses the target by {err:.3e}")

    def mixture(self) -> np.ndarray:
        vecs = np.array([s.amplitudes for s in self.states])
        return (vecs.T * self.weights) @ vecs.conj()

    def __len__(self):
        return len(self.states)

    def to_dict(self) -> dict:
        vecs = np.array([s.amplitudes for s in self.states])
        return {
            "kind": "ensemble",
            "dims": list(self.target.dims),
            "weights": self.weights.tolist(),
            "re": vecs.real.tolist(),
            "im": vecs.imag.tolist(),
        }


@dataclass(frozen=True, eq=False)
class MixedEnsemble:
    """Weighted density matrices, e.g. the conditional states left by a measurement."""

    weights: np.ndarray
    states: tuple[DensityMatrix, ...]

    def mixture(self) -> np.ndarray:
        return sum(p * s.matrix for p, s in zip(self.weights, self.states))


@dataclass(frozen=True, eq=False)
class RankOnePovm:
    """Elements |v_x><v_x|; ``vectors`` holds one row per outcome."""

    vectors: np.ndarray
    parents: tuple[int, ...] | None = field(default=None)

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.vectors, dtype=complex))
        if np.any(np.linalg.norm(v, axis=1) < 1e-14):
            raise StateError("rank-1 POVM elements must be nonzero")
        err = np.max(np.abs(v.T @ v.conj() - np.eye(v.shape[1])))
        if err > COMPLETENESS_TOL:
            raise StateError(f"POVM elements do not sum to identity (error {err:.3e})")
        object.__setattr__(self, "vectors", v)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def operators(self) -> np.ndarray:
        return np.einsum("xi,xj->xij", self.vectors, self.vectors.conj())

    @classmethod
    def from_isometry(cls, mixing: np.ndarray, drop_tol: float = 1e-14) -> "RankOnePovm":
        """POVM whose vectors are the conjugated rows of an isometry; null rows dropped."""
        v = np.conj(np.asarray(mixing, dtype=complex))
        keep = np.linalg.norm(v, axis=1) > drop_tol
        return cls(v[keep])

    def to_dict(self) -> dict:
        return {
            "kind": "rank1_povm",
            "dim": self.dim,
            "re": self.vectors.real.tolist(),
            "im": self.vectors.imag.tolist(),
        }


@dataclass(frozen=True, eq=False)
class GeneralPovm:
    operators: np.ndarray

    def __post_init__(self):
        ops = np.asarray(self.operators, dtype=complex)
        if ops.ndim != 3 or ops.shape[1] != ops.shape[2]:
            raise StateError(f"POVM operators must be a stack of square matrices, got {ops.shape}")
        for m in ops:
            if np.max(np.abs(m - m.conj().T)) > 1e-10 or np.linalg.eigvalsh(m)[0] < -1e-10:
                raise StateError("POVM operators must be positive semidefinite")
        err = np.max(np.abs(ops.sum(axis=0) - np.eye(ops.shape[1])))
        if err > COMPLETENESS_TOL:
            raise StateError(f"POVM operators do not sum to identity (error {err:.3e})")
        object.__setattr__(self, "operators", ops)

    @property
    def dim(self) -> int:
        return self.operators.shape[1]


def as_general(povm: RankOnePovm | GeneralPovm) -> GeneralPovm:
    return GeneralPovm(povm.operators) if isinstance(povm, RankOnePovm) else povm


def canonical_order(weights: np.ndarray, vecs: np.ndarray) -> np.ndarray:
    """Descending weight, ties broken lexicographically by amplitude real parts."""
    keys = [(-round(float(w), 12), tuple(np.round(v.real, 12))) for w, v in zip(weights, vecs)]
    return np.array(sorted(range(len(keys)), key=lambda i: keys[i]), dtype=int)


def _ensemble_from_vectors(unnorm: np.ndarray, target: DensityMatrix) -> Ensemble:
    """Normalize unnormalized members, drop null ones, fix phases and order."""
    p = np.sum(np.abs(unnorm) ** 2, axis=1)
    keep = p >= ZERO_WEIGHT
    p, unnorm = p[keep], unnorm[keep]
    vecs = np.array([_fix_phase(v / np.sqrt(pi)) for v, pi in zip(unnorm, p)])
    p = p / p.sum()
    order = canonical_order(p, vecs)
    states = tuple(PureState(vecs[i] / np.linalg.norm(vecs[i]), target.dims) for i in order)
    return Ensemble(p[order], states, target)


def support(rho: DensityMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Nonzero eigenvalues and matching eigenvectors (as columns), descending."""
    spec = spectral(rho)
    r = int(np.count_nonzero(spec.eigenvalues > ZERO_WEIGHT))
    return spec.eigenvalues[:r], spec.eigenvectors[:, :r]


def hjw_ensemble(rho: DensityMatrix, mixing) -> Ensemble:
    """Decomposition sum_x |psi_x><psi_x| with psi_x = sum_i u[x, i] sqrt(lam_i) |e_i>."""
    lam, e = support(rho)
    u = np.atleast_2d(np.asarray(mixing, dtype=complex))
    if u.shape[1] != lam.size or u.shape[0] < lam.size:
        raise StateError(f"mixing must have shape (m >= {lam.size}, {lam.size}), got {u.shape}")
    err = np.max(np.abs(u.conj().T @ u - np.eye(lam.size)))
    if err > ISOMETRY_TOL:
        raise StateError(f"mixing matrix is not an isometry (error {err:.3e})")
    unnorm = u @ (e * np.sqrt(lam)).T
    return _ensemble_from_vectors(unnorm, rho)


def _move_party_first(psi: PureState, party: int) -> tuple[np.ndarray, tuple[int, ...]]:
    n = len(psi.dims)
    if n != 3:
        raise StateError(f"expected a tripartite state, got dims {list(psi.dims)}")
    rest = [i for i in range(n) if i != party]
    t = np.transpose(psi.tensor_, [party] + rest)
    return t.reshape(psi.dims[party], -1), tuple(psi.dims[i] for i in rest)


def povm_to_ensemble(psi: PureState, povm: RankOnePovm, party: int = 1) -> Ensemble:
    """Decomposition of the two-party marginal steered by a rank-1 POVM on ``party``."""
    mat, _ = _move_party_first(psi, party)
    if povm.dim != mat.shape[0]:
        raise StateError(f"POVM acts on dimension {povm.dim}, party has {mat.shape[0]}")
    unnorm = povm.vectors.conj() @ mat
    target = partial_trace(psi, [i for i in range(3) if i != party])
    return _ensemble_from_vectors(unnorm, target)


def ensemble_to_povm(psi: PureState, ens: Ensemble, party: int = 1, tol: float = 1e-8) -> RankOnePovm:
    """Rank-1 POVM on ``party`` that steers ``psi`` into ``ens`` (up to member phases)."""
    mat, rest_dims = _move_party_first(psi, party)
    if tuple(ens.target.dims) != rest_dims:
        raise StateError(f"ensemble dims {list(ens.target.dims)} do not match {list(rest_dims)}")
    target = partial_trace(psi, [i for i in range(3) if i != party])
    err = np.max(np.abs(ens.mixture() - target.matrix))
    if err > tol:
        raise StateError(f"ensemble does not decompose the marginal (error {err:.3e})")
    g, s, fh = np.linalg.svd(mat, full_matrices=True)
    r = int(np.count_nonzero(s > np.sqrt(ZERO_WEIGHT)))
    g_sup, s, fh = g[:, :r], s[:r], fh[:r]
    members = np.array([np.sqrt(p) * st.amplitudes for p, st in zip(ens.weights, ens.states)])
    coef = (members @ fh.conj().T) / s
    resid = np.max(np.abs(members - (coef * s) @ fh))
    if resid > tol:
        raise StateError(f"ensemble members leave the support of the marginal (residual {resid:.3e})")
    vectors = coef.conj() @ g_sup.T
    kernel = g[:, r:]
    if kernel.shape[1]:
        vectors = np.vstack([vectors, kernel.T])
    return RankOnePovm(vectors)


def measure_induced_A_ensemble(rho_ab, povm: RankOnePovm | GeneralPovm) -> MixedEnsemble:
    """Conditional states of the first party after measuring the second."""
    rho_ab = as_density(rho_ab)
    if len(rho_ab.dims) != 2:
        raise StateError(f"expected a bipartite state, got dims {list(rho_ab.dims)}")
    da, db = rho_ab.dims
    ops = as_general(povm).operators
    if ops.shape[1] != db:
        raise StateError(f"POVM acts on dimension {ops.shape[1]}, second party has {db}")
    t = rho_ab.matrix.reshape(da, db, da, db)
    unnorm = np.einsum("aibj,xji->xab", t, ops)
    p = np.real(np.einsum("xaa->x", unnorm))
    weights, states = [], []
    for px, m in zip(p, unnorm):
        if px < ZERO_WEIGHT:
            continue
        m = m / px
        m = 0.5 * (m + m.conj().T)
        weights.append(px)
        states.append(DensityMatrix(m / np.trace(m).real, (da,)))
    w = np.array(weights)
    return MixedEnsemble(w / w.sum(), tuple(states))


def refine_to_rank1(povm: GeneralPovm) -> RankOnePovm:
    """Split every element into rank-1 pieces via its spectral decomposition."""
    vectors, parents = [], []
    for x, m in enumerate(povm.operators):
        w, v = np.linalg.eigh(0.5 * (m + m.conj().T))
        for lam, vec in zip(w[::-1], v.T[::-1]):
            if lam > ZERO_WEIGHT:
                vectors.append(np.sqrt(lam) * _fix_phase(vec))
                parents.append(x)
    return RankOnePovm(np.array(vectors), tuple(parents))


def computational_povm(d: int) -> RankOnePovm:
    return RankOnePovm(np.eye(d, dtype=complex))


def fourier_povm(d: int) -> RankOnePovm:
    """Projective measurement in the discrete Fourier basis (X basis for qubits)."""
    k = np.arange(d)
    return RankOnePovm(np.exp(2j * np.pi * np.outer(k, k) / d) / np.sqrt(d))


def ensemble_from_dict(obj: dict, target: DensityMatrix) -> Ensemble:
    vecs = np.asarray(obj["re"], dtype=float) + 1j * np.asarray(obj["im"], dtype=float)
    states = tuple(PureState(v, target.dims) for v in vecs)
    return Ensemble(np.asarray(obj["weights"], dtype=float), states, target)


def povm_from_dict(obj: dict) -> RankOnePovm:
    return RankOnePovm(np.asarray(obj["re"], dtype=float) + 1j * np.asarray(obj["im"], dtype=float))


def match_ensembles(a: Ensemble, b: Ensemble) -> float:
    """Max weight mismatch after optimal member matching (members compared by fidelity)."""
    if len(a) != len(b):
        return float("inf")
    va = np.array([s.amplitudes for s in a.states])
    vb = np.array([s.amplitudes for s in b.states])
    fid = np.abs(va.conj() @ vb.T) ** 2
    cost = -fid + np.abs(a.weights[:, None] - b.weights[None, :])
    rows, cols = linear_sum_assignment(cost)
    return float(np.max(np.abs(a.weights[rows] - b.weights[cols])))

