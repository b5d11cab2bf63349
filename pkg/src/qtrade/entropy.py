"""Tsallis-q entropy family in natural-log units."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .qstate import EIG_CLAMP, DensityMatrix, StateError, as_density, partial_trace, spectral

VN_THRESHOLD = 1e-9


class Mode(enum.Enum):
    GENERAL = "general"
    VON_NEUMANN = "von_neumann"


@dataclass(frozen=True)
class QParam:
    q: float

    def __post_init__(self):
        q = float(self.q)
        if not math.isfinite(q) or q < 0:
            raise ValueError(f"q must be a finite real >= 0, got {self.q!r}")
        object.__setattr__(self, "q", q)

    @property
    def mode(self) -> Mode:
        return Mode.VON_NEUMANN if abs(self.q - 1.0) < VN_THRESHOLD else Mode.GENERAL

    @property
    def is_vn(self) -> bool:
        return self.mode is Mode.VON_NEUMANN


def as_qparam(q) -> QParam:
    return q if isinstance(q, QParam) else QParam(q)


def q_log(x: float, q) -> float:
    qp = as_qparam(q)
    if not x > 0:
        raise ValueError(f"q_log is defined for x > 0, got {x!r}")
    if qp.is_vn:
        return math.log(x)
    return (x ** (1.0 - qp.q) - 1.0) / (1.0 - qp.q)


def entropy_of_spectrum(eigs, q) -> float:
    """Tsallis-q entropy of a probability vector; entries below the clamp count as 0."""
    qp = as_qparam(q)
    lam = np.asarray(eigs, dtype=float)
    lam = lam[lam >= EIG_CLAMP]
    if lam.size <= 1:
        return 0.0
    if qp.is_vn:
        val = -float(np.sum(lam * np.log(lam)))
    else:
        val = (float(np.sum(lam**qp.q)) - 1.0) / (1.0 - qp.q)
    return max(val, 0.0)


def tsallis_entropy(rho, q) -> float:
    rho = as_density(rho)
    return entropy_of_spectrum(spectral(rho).eigenvalues, q)


def _bipartite(rho) -> DensityMatrix:
    rho = as_density(rho)
    if len(rho.dims) != 2:
        raise StateError(f"expected a bipartite state, got dims {list(rho.dims)}")
    return rho


def conditional_entropy(rho_ab, q) -> float:
    """S_q(AB) - S_q(B); conditioning is on the second subsystem."""
    rho_ab = _bipartite(rho_ab)
    return tsallis_entropy(rho_ab, q) - tsallis_entropy(partial_trace(rho_ab, [1]), q)


def mutual_entropy(rho_ab, q) -> float:
    rho_ab = _bipartite(rho_ab)
    return (
        tsallis_entropy(partial_trace(rho_ab, [0]), q)
        + tsallis_entropy(partial_trace(rho_ab, [1]), q)
        - tsallis_entropy(rho_ab, q)
    )


def tsallis_difference(weights: Sequence[float], states: Sequence[DensityMatrix], q, mixture: DensityMatrix | None = None) -> float:
    """S_q of the mixture minus the q-weighted member entropies sum_i p_i^q S_q(rho_i)."""
    qp = as_qparam(q)
    w = np.asarray(weights, dtype=float)
    states = [as_density(s) for s in states]
    if w.ndim != 1 or w.size != len(states) or w.size == 0:
        raise ValueError("weights and states must be nonempty and of equal length")
    if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-10:
        raise ValueError(f"weights must be positive and sum to 1 (sum={w.sum()!r})")
    if len({s.matrix.shape for s in states}) != 1:
        raise ValueError("ensemble members have different dimensions")
    if mixture is None:
        mat = sum(p * s.matrix for p, s in zip(w, states))
        mixture = DensityMatrix(mat / np.trace(mat).real, states[0].dims)
    qe = 1.0 if qp.is_vn else qp.q
    member = sum(p**qe * tsallis_entropy(s, qp) for p, s in zip(w, states))
    return tsallis_entropy(mixture, qp) - member
