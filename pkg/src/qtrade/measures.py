"""Tsallis-q correlation measures of bipartite states.

Every measure here is an optimization of the same kernel. A family of
operators ``K_j`` (each ``d1 x k``) and an isometry ``U`` (``m x n``) define
``T_x = sum_j U[x, j] K_j``; then ``T_x T_x^dagger = p_x rho_x`` is an
unnormalized state of the first party and

    F(U) = sum_x p_x^q S_q(rho_x).

With ``K_j`` built from the eigenvectors of rho_AB, ``U`` ranges over pure-state
decompositions (q-E minimizes F, q-EoA maximizes it). With ``K_b`` the slices of
a purification along the second party, ``U`` ranges over rank-1 POVMs on that
party (q-CC is S_q(rho_A) - min F, q-UE is S_q(rho_A) - max F).

The second party is always the one measured or traced; conditional states
live on the first.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Any

import numpy as np

from .ensemble import (
    Ensemble,
    RankOnePovm,
    ZERO_WEIGHT,
    hjw_ensemble,
    measure_induced_A_ensemble,
    support,
)
from .entropy import QParam, as_qparam, mutual_entropy, tsallis_difference, tsallis_entropy
from .optimize import Direction, OptConfig, OptResult, optimize
from .qstate import EIG_CLAMP, DensityMatrix, PureState, StateError, as_density, partial_trace

PURE_TOL = 1e-9


class Measure(enum.Enum):
    QE = "q-entanglement"
    QEOA = "q-eoa"
    QCC = "q-cc"
    QUE = "q-ue"
    QD = "q-discord"
    QUD = "q-ud"


class BoundSide(enum.Enum):
    UPPER = "upper"
    LOWER = "lower"
    EXACT = "exact"


@dataclass
class MeasureReport:
    measure: Measure
    value: float
    q: QParam
    certificate: Ensemble | RankOnePovm | None
    opt: OptResult | None
    bound_side: BoundSide
    m_outcomes: int | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "measure": self.measure.value,
            "q": self.q.q,
            "value": self.value,
            "bound_side": self.bound_side.value,
            "m_outcomes": self.m_outcomes,
            "certificate": None if self.certificate is None else self.certificate.to_dict(),
            "opt": None if self.opt is None else self.opt.to_dict(),
        }


class SteeringObjective:
    """Batched F(U) = sum_x p_x^q S_q(rho_x) with analytic Euclidean gradient."""

    def __init__(self, kops: np.ndarray, q):
        self.k = np.asarray(kops, dtype=complex)
        self.qp = as_qparam(q)

    @property
    def n(self) -> int:
        return self.k.shape[0]

    def _blocks(self, us):
        t = np.einsum("bxj,jak->bxak", us, self.k)
        r = t @ np.conj(np.swapaxes(t, -1, -2))
        return t, 0.5 * (r + np.conj(np.swapaxes(r, -1, -2)))

    def _terms(self, lam):
        """Per-outcome p^q S_q and, for the gradient, dG/dlambda."""
        lam = np.clip(lam, 0.0, None)
        p = lam.sum(axis=-1)
        safe_p = np.where(p > 0, p, 1.0)
        live = (lam >= EIG_CLAMP * safe_p[..., None]) & (p[..., None] >= ZERO_WEIGHT)
        lv = np.where(live, lam, 0.0)
        pv = lv.sum(axis=-1)
        if self.qp.is_vn:
            with np.errstate(divide="ignore", invalid="ignore"):
                ent = -np.sum(np.where(live, lv * np.log(np.where(live, lv, 1.0)), 0.0), axis=-1)
                ent = ent + np.where(pv > 0, pv * np.log(np.where(pv > 0, pv, 1.0)), 0.0)
                floor = np.maximum(lam, 1e-14 * safe_p[..., None])
                dg = np.where(p[..., None] > 0, np.log(safe_p[..., None] / floor), 0.0)
        else:
            q = self.qp.q
            ent = (np.sum(lv**q, axis=-1) - pv**q) / (1.0 - q)
            dg = q * (lam ** (q - 1.0) - p[..., None] ** (q - 1.0)) / (1.0 - q)
        return np.maximum(ent, 0.0), dg

    def values(self, us):
        _, r = self._blocks(np.asarray(us))
        lam = np.linalg.eigvalsh(r)
        ent, _ = self._terms(lam)
        return ent.sum(axis=-1)

    def value_and_grad(self, us):
        us = np.asarray(us)
        t, r = self._blocks(us)
        lam, v = np.linalg.eigh(r)
        ent, dg = self._terms(lam)
        d = (v * dg[..., None, :]) @ np.conj(np.swapaxes(v, -1, -2))
        c = np.einsum("bxak,bxac,jck->bxj", np.conj(t), d, self.k)
        return ent.sum(axis=-1), 2.0 * np.conj(c)

    def __call__(self, u) -> float:
        return float(self.values(np.asarray(u)[None])[0])


def _as_bipartite(state) -> DensityMatrix:
    rho = as_density(state)
    if len(rho.dims) != 2:
        raise StateError(f"measures need a bipartite state, got dims {list(rho.dims)}")
    return rho


def _require_q(q) -> QParam:
    qp = as_qparam(q)
    if qp.q < 1.0 - 1e-12:
        raise ValueError(f"correlation measures are defined here for q >= 1, got q={qp.q}")
    return qp


def _pure_vector(state, rho: DensityMatrix) -> np.ndarray | None:
    if isinstance(state, PureState):
        return state.amplitudes
    if rho.is_pure(PURE_TOL):
        return rho.to_pure(PURE_TOL).amplitudes
    return None


def decomposition_operators(rho: DensityMatrix) -> np.ndarray:
    """K_i = sqrt(lam_i) e_i reshaped to d1 x d2, one per nonzero eigenvalue."""
    lam, e = support(rho)
    d1, d2 = rho.dims
    return (e * np.sqrt(lam)).T.reshape(lam.size, d1, d2)


def measurement_operators(rho: DensityMatrix) -> np.ndarray:
    """K_b = slice b (along the second party) of a purification of rho."""
    lam, e = support(rho)
    d1, d2 = rho.dims
    w = (e * np.sqrt(lam)).reshape(d1, d2, lam.size)
    return np.transpose(w, (1, 0, 2))


def _cap(n: int, cfg: OptConfig) -> int:
    m = cfg.m_outcomes if cfg.m_outcomes is not None else n * n
    if m < n:
        raise ValueError(f"m_outcomes={m} is below the minimum {n} for this state")
    return m


def steering_optimum(kops: np.ndarray, q, direction: Direction, cfg: OptConfig) -> OptResult:
    obj = SteeringObjective(kops, q)
    m = _cap(obj.n, cfg)
    return optimize(obj, direction, (m, obj.n), cfg)


def decomposition_value(ens: Ensemble, q) -> float:
    """sum_x p_x^q S_q(tr_2 psi_x) for a decomposition of a bipartite state."""
    qp = as_qparam(q)
    qe = 1.0 if qp.is_vn else qp.q
    return float(sum(p**qe * tsallis_entropy(partial_trace(s, [0]), qp) for p, s in zip(ens.weights, ens.states)))


def measurement_value(rho_ab, povm: RankOnePovm, q) -> float:
    """Tsallis-q difference of the first-party ensemble induced by ``povm``."""
    rho_ab = _as_bipartite(rho_ab)
    ens = measure_induced_A_ensemble(rho_ab, povm)
    return tsallis_difference(ens.weights, ens.states, q, mixture=partial_trace(rho_ab, [0]))


def _decomposition_measure(measure, state, q, cfg, direction, closed_form):
    qp = _require_q(q)
    cfg = cfg or OptConfig()
    rho = _as_bipartite(state)
    vec = _pure_vector(state, rho) if closed_form else None
    if vec is not None:
        val = tsallis_entropy(partial_trace(PureState(vec, rho.dims), [0]), qp)
        return MeasureReport(measure, val, qp, None, None, BoundSide.EXACT)
    kops = decomposition_operators(rho)
    res = steering_optimum(kops, qp, direction, cfg)
    side = BoundSide.UPPER if direction is Direction.MIN else BoundSide.LOWER
    cert = hjw_ensemble(rho, res.argument)
    return MeasureReport(measure, max(res.value, 0.0), qp, cert, res, side, res.argument.shape[0])


def q_entanglement(state, q, cfg: OptConfig | None = None, closed_form: bool = True) -> MeasureReport:
    """Minimum q-expected marginal entropy over pure-state decompositions.

    ``closed_form=False`` forces the optimization even for pure inputs; with
    more than one allowed member and q > 1, splitting a pure state into equal
    copies lowers the q-expectation below S_q(rho_A).
    """
    return _decomposition_measure(Measure.QE, state, q, cfg, Direction.MIN, closed_form)


def q_eoa(state, q, cfg: OptConfig | None = None, closed_form: bool = True) -> MeasureReport:
    return _decomposition_measure(Measure.QEOA, state, q, cfg, Direction.MAX, closed_form)


def _measurement_search(state, q, cfg, direction):
    qp = _require_q(q)
    cfg = cfg or OptConfig()
    rho = _as_bipartite(state)
    res = steering_optimum(measurement_operators(rho), qp, direction, cfg)
    s_a = tsallis_entropy(partial_trace(rho, [0]), qp)
    return qp, rho, res, s_a


def q_cc(state, q, cfg: OptConfig | None = None) -> MeasureReport:
    """One-way classical q-correlation, searched over rank-1 POVMs on the second party."""
    qp, rho, res, s_a = _measurement_search(state, q, cfg, Direction.MIN)
    cert = RankOnePovm.from_isometry(res.argument)
    return MeasureReport(Measure.QCC, max(s_a - res.value, 0.0), qp, cert, res, BoundSide.LOWER, res.argument.shape[0])


def q_ue(state, q, cfg: OptConfig | None = None, closed_form: bool = True) -> MeasureReport:
    """One-way unlocalizable q-entanglement (minimum over rank-1 POVMs)."""
    qp = _require_q(q)
    rho = _as_bipartite(state)
    vec = _pure_vector(state, rho) if closed_form else None
    if vec is not None:
        val = tsallis_entropy(partial_trace(rho, [0]), qp)
        return MeasureReport(Measure.QUE, val, qp, None, None, BoundSide.EXACT)
    qp, rho, res, s_a = _measurement_search(rho, qp, cfg, Direction.MAX)
    cert = RankOnePovm.from_isometry(res.argument)
    return MeasureReport(Measure.QUE, max(s_a - res.value, 0.0), qp, cert, res, BoundSide.UPPER, res.argument.shape[0])


def q_discord(state, q, cfg: OptConfig | None = None) -> MeasureReport:
    rho = _as_bipartite(state)
    cc = q_cc(rho, q, cfg)
    val = mutual_entropy(rho, cc.q) - cc.value
    return MeasureReport(Measure.QD, val, cc.q, cc.certificate, cc.opt, BoundSide.UPPER, cc.m_outcomes)


def q_ud(state, q, cfg: OptConfig | None = None, closed_form: bool = True) -> MeasureReport:
    qp = _require_q(q)
    rho = _as_bipartite(state)
    if closed_form and _pure_vector(state, rho) is not None:
        val = tsallis_entropy(partial_trace(rho, [1]), qp)
        return MeasureReport(Measure.QUD, val, qp, None, None, BoundSide.EXACT)
    ue = q_ue(rho, qp, cfg, closed_form=False)
    val = mutual_entropy(rho, qp) - ue.value
    return MeasureReport(Measure.QUD, val, qp, ue.certificate, ue.opt, BoundSide.LOWER, ue.m_outcomes)


MEASURES = {
    Measure.QE: q_entanglement,
    Measure.QEOA: q_eoa,
    Measure.QCC: q_cc,
    Measure.QUE: q_ue,
    Measure.QD: q_discord,
    Measure.QUD: q_ud,
}


def compute(measure: Measure | str, state, q, cfg: OptConfig | None = None) -> MeasureReport:
    return MEASURES[Measure(measure)](state, q, cfg)


def reevaluate(report: MeasureReport, state) -> float:
    """Recompute a report's value from its certificate alone."""
    rho = _as_bipartite(state)
    qp = report.q
    if report.certificate is None:
        return compute(report.measure, state, qp).value
    cert = report.certificate
    if report.measure in (Measure.QE, Measure.QEOA):
        return decomposition_value(cert, qp)
    chi = measurement_value(rho, cert, qp)
    if report.measure in (Measure.QCC, Measure.QUE):
        return chi
    return mutual_entropy(rho, qp) - chi
