"""Residual checks of the tripartite trade-off and equivalence identities.

Every check takes a pure state on A (0), B (1), C (2) and compares two sides
that must agree exactly. Optimized measures are bounds (maximizations give
lower bounds, minimizations upper bounds), so a raw residual mixes the
optimizer gap with any genuine violation. Reports therefore carry the restart
spread of every optimization involved, and only residuals well above that
spread are flagged.

Outcome caps: when a rank-1 POVM on party X is paired with decompositions of
the other two parties' marginal, both searches use ``m = d_X**2`` members so
they range over the same set.
"""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

from .ensemble import povm_to_ensemble
from .entropy import QParam, as_qparam, conditional_entropy, mutual_entropy, tsallis_entropy
from .measures import MeasureReport, decomposition_value, q_eoa, q_entanglement, q_cc, q_ue
from .optimize import OptConfig
from .qstate import (
    DensityMatrix,
    PureState,
    StateError,
    canonical_state,
    haar_random_pure,
    partial_trace,
    rng_from_seed,
    state_from_dict,
    state_to_dict,
)

log = logging.getLogger(__name__)

PURITY_TOL = 1e-9
CONVERGENCE_SPREAD = 1e-6
FLAG_FLOOR = 1e-6
FLAG_FACTOR = 10.0
VERDICT_TOL = 1e-6
DEFAULT_Q_GRID = (1.0, 1.25, 1.5, 2.0, 3.0, 5.0)


class Theorem(enum.Enum):
    T1_CC = "t1_cc"
    T1_UE = "t1_ue"
    T2 = "t2"
    T3_IDENTITY = "t3_identity"
    T4_IDENTITY = "t4_identity"
    MONOGAMY_UE = "monogamy_ue"
    POLYGAMY_EOA = "polygamy_eoa"
    POLYGAMY_UD = "polygamy_ud"
    COND_CANCEL = "cond_cancel"


SCAN_THEOREMS = (Theorem.T1_CC, Theorem.T1_UE, Theorem.T2, Theorem.T3_IDENTITY, Theorem.T4_IDENTITY)


@dataclass
class TheoremReport:
    theorem: Theorem
    state_id: str
    q: float
    lhs: float
    rhs: float
    residual: float
    converged: bool
    spread: float = 0.0
    certificates: list = field(default_factory=list)
    details: dict = field(default_factory=dict)

    @property
    def flagged(self) -> bool:
        """Residual too large to blame on the optimizer gap."""
        return abs(self.residual) > max(FLAG_FACTOR * self.spread, FLAG_FLOOR)

    def to_dict(self, certificates: bool = True) -> dict[str, Any]:
        out = {
            "theorem": self.theorem.value,
            "state_id": self.state_id,
            "q": self.q,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "residual": self.residual,
            "converged": self.converged,
            "spread": self.spread,
            "flagged": self.flagged,
            "details": self.details,
        }
        if certificates:
            out["certificates"] = self.certificates
        return out


def _check_pure_tripartite(psi) -> PureState:
    if isinstance(psi, DensityMatrix):
        psi = psi.to_pure(PURITY_TOL)
    if not isinstance(psi, PureState):
        raise TypeError(f"expected a PureState, got {type(psi).__name__}")
    if len(psi.dims) != 3:
        raise StateError(f"theorem checks need a tripartite state, got dims {list(psi.dims)}")
    return psi


def _require_q(q) -> QParam:
    qp = as_qparam(q)
    if qp.q < 1.0 - 1e-12:
        raise ValueError(f"theorem checks need q >= 1, got q={qp.q}")
    return qp


class Tripartite:
    """Marginals and optimized measures of one pure state, memoized per q."""

    def __init__(self, psi, cfg: OptConfig | None = None, state_id: str = "state"):
        self.psi = _check_pure_tripartite(psi)
        self.cfg = cfg or OptConfig()
        self.state_id = state_id
        self._marg: dict[tuple, DensityMatrix] = {}
        self._meas: dict[tuple, MeasureReport] = {}

    @property
    def dims(self):
        return self.psi.dims

    def marginal(self, keep: Sequence[int]) -> DensityMatrix:
        key = tuple(keep)
        if key not in self._marg:
            self._marg[key] = partial_trace(self.psi, key)
        return self._marg[key]

    def entropy(self, keep: Sequence[int], q) -> float:
        return tsallis_entropy(self.marginal(keep), q)

    def _cfg_for(self, party: int) -> OptConfig:
        if self.cfg.m_outcomes is not None:
            return self.cfg
        return self.cfg.with_(m_outcomes=self.dims[party] ** 2)

    def measure(self, kind: str, pair: tuple[int, int], q) -> MeasureReport:
        """``kind`` in {cc, ue, e, eoa}; ``pair`` = (kept party, measured or traced party)."""
        qp = _require_q(q)
        key = (kind, pair, qp.q)
        if key not in self._meas:
            rho = self.marginal(pair)
            if kind in ("cc", "ue"):
                cfg = self._cfg_for(pair[1])
                fn = q_cc if kind == "cc" else q_ue
                rep = fn(rho, qp, cfg) if kind == "cc" else fn(rho, qp, cfg, closed_form=False)
            else:
                other = 3 - pair[0] - pair[1]
                cfg = self._cfg_for(other)
                fn = q_entanglement if kind == "e" else q_eoa
                rep = fn(rho, qp, cfg, closed_form=False)
            self._meas[key] = rep
        return self._meas[key]

    def ud(self, pair, q) -> float:
        """One-way unlocalizable q-discord of the marginal on ``pair``."""
        return mutual_entropy(self.marginal(pair), q) - self.measure("ue", pair, q).value


def _spread(*reports: MeasureReport) -> float:
    return float(sum(r.opt.spread for r in reports if r.opt is not None))


def _certs(*reports: MeasureReport) -> list:
    return [r.to_dict() for r in reports]


def _report(theorem, tri, qp, lhs, rhs, reports, details=None) -> TheoremReport:
    spread = _spread(*reports)
    return TheoremReport(
        theorem=theorem,
        state_id=tri.state_id,
        q=qp.q,
        lhs=float(lhs),
        rhs=float(rhs),
        residual=float(lhs - rhs),
        converged=spread < CONVERGENCE_SPREAD,
        spread=spread,
        certificates=_certs(*reports),
        details=details or {},
    )


def _tri(psi, cfg, state_id) -> Tripartite:
    if isinstance(psi, Tripartite):
        return psi
    return Tripartite(psi, cfg, state_id)


def verify_t1_cc(psi, q, cfg: OptConfig | None = None, state_id: str = "state") -> TheoremReport:
    """S_q(A) against q-CC(AB) + q-E(AC), each from its own search."""
    tri, qp = _tri(psi, cfg, state_id), _require_q(q)
    s_a = tri.entropy([0], qp)
    cc = tri.measure("cc", (0, 1), qp)
    e = tri.measure("e", (0, 2), qp)
    rhs = cc.value + e.value
    return _report(Theorem.T1_CC, tri, qp, s_a, rhs, [cc, e], {"slack": rhs - s_a, "q_cc": cc.value, "q_e": e.value})


def verify_t1_ue(psi, q, cfg: OptConfig | None = None, state_id: str = "state") -> TheoremReport:
    """S_q(A) against q-UE(AB) + q-EoA(AC).

    The reported residual uses one search over rank-1 POVMs on B: the optimal
    POVM gives q-UE, and the decomposition of rho_AC it steers gives the
    q-EoA term, evaluated from the ensemble itself. The residual of two
    independent searches is kept in ``details``.
    """
    tri, qp = _tri(psi, cfg, state_id), _require_q(q)
    s_a = tri.entropy([0], qp)
    ue = tri.measure("ue", (0, 1), qp)
    ens = povm_to_ensemble(tri.psi, ue.certificate, party=1)
    eoa_shared = decomposition_value(ens, qp)
    eoa = tri.measure("eoa", (0, 2), qp)
    indep = s_a - (ue.value + eoa.value)
    details = {
        "q_ue": ue.value,
        "q_eoa_shared": eoa_shared,
        "q_eoa_independent": eoa.value,
        "independent_residual": indep,
    }
    rep = _report(Theorem.T1_UE, tri, qp, s_a, ue.value + eoa_shared, [ue], details)
    rep.certificates.append({"kind": "steered_ensemble", **ens.to_dict()})
    return rep


def verify_t2(psi, q, cfg: OptConfig | None = None, state_id: str = "state") -> TheoremReport:
    """S_q(A) against q-UD(rho_BA) + q-UE(rho_CA); party A is measured in both."""
    tri, qp = _tri(psi, cfg, state_id), _require_q(q)
    s_a = tri.entropy([0], qp)
    ue_ba = tri.measure("ue", (1, 0), qp)
    ue_ca = tri.measure("ue", (2, 0), qp)
    ud_ba = mutual_entropy(tri.marginal((1, 0)), qp) - ue_ba.value
    details = {"q_ud_BA": ud_ba, "q_ue_CA": ue_ca.value}
    return _report(Theorem.T2, tri, qp, s_a, ud_ba + ue_ca.value, [ue_ba, ue_ca], details)


def t3_equivalence_residual(psi, q, cfg: OptConfig | None = None, state_id: str = "state") -> TheoremReport:
    """EoA polygamy gap against UE monogamy gap; pure-cut terms in closed form."""
    tri, qp = _tri(psi, cfg, state_id), _require_q(q)
    s_a = tri.entropy([0], qp)
    eoa_ab, eoa_ac = tri.measure("eoa", (0, 1), qp), tri.measure("eoa", (0, 2), qp)
    ue_ab, ue_ac = tri.measure("ue", (0, 1), qp), tri.measure("ue", (0, 2), qp)
    # E^a and uE of the pure A|BC cut both equal S_q(rho_A)
    lhs = eoa_ab.value + eoa_ac.value - s_a
    rhs = s_a - ue_ab.value - ue_ac.value
    details = {
        "polygamy_eoa_gap": lhs,
        "monogamy_ue_gap": rhs,
        "polygamy_eoa_satisfied": bool(lhs >= -VERDICT_TOL),
        "monogamy_ue_satisfied": bool(rhs >= -VERDICT_TOL),
    }
    return _report(Theorem.T3_IDENTITY, tri, qp, lhs, rhs, [eoa_ab, eoa_ac, ue_ab, ue_ac], details)


def t4_equivalence_residual(psi, q, cfg: OptConfig | None = None, state_id: str = "state") -> TheoremReport:
    """q-UD(AB) + q-UD(AC) against q-EoA(AC) + q-EoA(AB), plus the pure-cut identity."""
    tri, qp = _tri(psi, cfg, state_id), _require_q(q)
    ue_ab, ue_ac = tri.measure("ue", (0, 1), qp), tri.measure("ue", (0, 2), qp)
    eoa_ab, eoa_ac = tri.measure("eoa", (0, 1), qp), tri.measure("eoa", (0, 2), qp)
    ud_ab, ud_ac = tri.ud((0, 1), qp), tri.ud((0, 2), qp)
    lhs = ud_ab + ud_ac
    rhs = eoa_ac.value + eoa_ab.value
    # pure A|BC cut: uD equals S_q(rho_BC), E^a equals S_q(rho_A)
    ud_pure = tri.entropy([1, 2], qp)
    eoa_pure = tri.entropy([0], qp)
    cond = conditional_entropy(tri.marginal((0, 1)), qp) + conditional_entropy(tri.marginal((0, 2)), qp)
    ud_gap = ud_ab + ud_ac - ud_pure
    details = {
        "check_b_lhs": ud_pure,
        "check_b_rhs": eoa_pure,
        "check_b_residual": ud_pure - eoa_pure,
        "cond_cancel_residual": cond,
        "polygamy_ud_gap": ud_gap,
        "polygamy_eoa_gap": eoa_ab.value + eoa_ac.value - eoa_pure,
        "polygamy_ud_satisfied": bool(ud_gap >= -VERDICT_TOL),
    }
    return _report(Theorem.T4_IDENTITY, tri, qp, lhs, rhs, [ue_ab, ue_ac, eoa_ab, eoa_ac], details)


def cond_entropy_cancellation(psi, q, state_id: str = "state") -> TheoremReport:
    """S_q(A|B) + S_q(A|C), which vanishes for every pure tripartite state."""
    psi = _check_pure_tripartite(psi.psi if isinstance(psi, Tripartite) else psi)
    qp = _require_q(q)
    lhs = conditional_entropy(partial_trace(psi, [0, 1]), qp) + conditional_entropy(partial_trace(psi, [0, 2]), qp)
    return TheoremReport(Theorem.COND_CANCEL, state_id, qp.q, lhs, 0.0, lhs, True)


def inequality_reports(t3: TheoremReport, t4: TheoremReport) -> list[TheoremReport]:
    """Monogamy/polygamy gaps as reports; residual is the gap (>= 0 means satisfied)."""
    out = []
    for thm, rep, key in (
        (Theorem.POLYGAMY_EOA, t3, "polygamy_eoa_gap"),
        (Theorem.MONOGAMY_UE, t3, "monogamy_ue_gap"),
        (Theorem.POLYGAMY_UD, t4, "polygamy_ud_gap"),
    ):
        gap = rep.details[key]
        out.append(TheoremReport(thm, rep.state_id, rep.q, gap, 0.0, gap, rep.converged, rep.spread,
                                 details={"satisfied": bool(gap >= -VERDICT_TOL)}))
    return out


VERIFIERS = {
    Theorem.T1_CC: verify_t1_cc,
    Theorem.T1_UE: verify_t1_ue,
    Theorem.T2: verify_t2,
    Theorem.T3_IDENTITY: t3_equivalence_residual,
    Theorem.T4_IDENTITY: t4_equivalence_residual,
}


def verify(theorem: Theorem | str, psi, q, cfg: OptConfig | None = None, state_id: str = "state") -> TheoremReport:
    theorem = Theorem(theorem)
    if theorem is Theorem.COND_CANCEL:
        return cond_entropy_cancellation(psi, q, state_id)
    return VERIFIERS[theorem](psi, q, cfg, state_id)


# -- corpora ---------------------------------------------------------------

CANONICAL_CORPUS = ("GHZ", "W", "PRODUCT")


def make_corpus(
    groups: Sequence[tuple[int, Sequence[int]]],
    seed: int,
    include_canonical: bool = False,
) -> list[tuple[str, PureState]]:
    """Haar-random pure states, ``count`` per ``dims`` group, all drawn from one seeded stream.

    Canonical qubit states (GHZ, W, |000>) are prepended on request.
    """
    rng = rng_from_seed(seed)
    out = []
    if include_canonical:
        out += [(name, canonical_state(name, (2, 2, 2))) for name in CANONICAL_CORPUS]
    for count, dims in groups:
        if count < 1:
            raise ValueError(f"corpus count must be >= 1, got {count}")
        dims = tuple(int(d) for d in dims)
        if len(dims) != 3 or min(dims) < 2:
            raise StateError(f"corpus states must be tripartite with dims >= 2, got {list(dims)}")
        tag = "".join(map(str, dims))
        out += [(f"haar-{tag}-{i:03d}", haar_random_pure(dims, rng)) for i in range(count)]
    return out


def corpus_to_json(corpus: Sequence[tuple[str, PureState]]) -> list[dict]:
    return [{"id": sid, **state_to_dict(psi)} for sid, psi in corpus]


def corpus_from_json(items: Sequence[dict]) -> list[tuple[str, PureState]]:
    if not isinstance(items, list) or not items:
        raise StateError("a corpus must be a nonempty JSON array of states")
    out = []
    for i, obj in enumerate(items):
        psi = state_from_dict(obj)
        out.append((str(obj.get("id", f"state{i}")), _check_pure_tripartite(psi)))
    return out


# -- scans -----------------------------------------------------------------

def _scan_item(args) -> tuple[list[dict], float]:
    state_id, psi, q_grid, cfg, theorems = args
    start = time.perf_counter()
    out = []
    try:
        tri = Tripartite(psi, cfg, state_id)
    except Exception as exc:  # reported per item, the scan continues
        return [{"state_id": state_id, "error": f"{type(exc).__name__}: {exc}"}], 0.0
    for q in q_grid:
        for thm in theorems:
            try:
                rep = verify(thm, tri, q, cfg, state_id)
                out.append(rep.to_dict())
            except Exception as exc:
                log.warning("[%s q=%s %s] %s", state_id, q, thm.value, exc)
                out.append({"state_id": state_id, "q": float(q), "theorem": thm.value,
                            "error": f"{type(exc).__name__}: {exc}"})
    return out, time.perf_counter() - start


def summarize(reports: Iterable[dict], q_grid: Sequence[float], n_states: int, cfg: OptConfig) -> dict:
    per: dict[str, dict] = {}
    verdicts: dict[str, dict] = {}
    flags, errors = [], []
    for rep in reports:
        if "error" in rep:
            errors.append(rep)
            continue
        thm = rep["theorem"]
        s = per.setdefault(thm, {"count": 0, "max_abs_residual": 0.0, "unconverged": 0, "flagged": 0})
        s["count"] += 1
        s["max_abs_residual"] = max(s["max_abs_residual"], abs(rep["residual"]))
        s["unconverged"] += 0 if rep["converged"] else 1
        if rep["flagged"]:
            s["flagged"] += 1
            flags.append({k: rep[k] for k in ("state_id", "theorem", "q", "residual", "spread")})
        d = rep["details"]
        v = verdicts.setdefault(repr(float(rep["q"])), {})
        for key in ("polygamy_eoa_satisfied", "monogamy_ue_satisfied", "polygamy_ud_satisfied"):
            if key in d:
                t = v.setdefault(key.replace("_satisfied", ""), {"satisfied": 0, "total": 0})
                t["total"] += 1
                t["satisfied"] += int(d[key])
    return {
        "n_states": n_states,
        "q_grid": [float(q) for q in q_grid],
        "config": {"restarts": cfg.restarts, "max_iters": cfg.max_iters, "tol": cfg.tol,
                   "seed": cfg.seed, "m_outcomes": cfg.m_outcomes},
        "theorems": per,
        "verdicts": verdicts,
        "violation_candidates": flags,
        "errors": errors,
    }


def summary_hash(summary: dict) -> str:
    return hashlib.sha256(json.dumps(summary, sort_keys=True).encode()).hexdigest()


@dataclass
class ScanResult:
    reports: list[dict]
    summary: dict
    runtimes: dict[str, float]


def scan(
    corpus: Sequence[tuple[str, PureState]] | Sequence[PureState],
    q_grid: Sequence[float] = DEFAULT_Q_GRID,
    cfg: OptConfig | None = None,
    theorems: Sequence[Theorem] = SCAN_THEOREMS,
    jobs: int = 1,
) -> ScanResult:
    """Run the theorem checks over ``corpus x q_grid``; results keep corpus order.

    Wall-clock runtimes are returned separately from the summary so that the
    summary is a pure function of the inputs.
    """
    cfg = cfg or OptConfig()
    if not corpus or not q_grid:
        raise ValueError("corpus and q_grid must be nonempty")
    for q in q_grid:
        _require_q(q)
    items = [c if isinstance(c, tuple) else (f"state{i}", c) for i, c in enumerate(corpus)]
    theorems = tuple(Theorem(t) for t in theorems)
    work = [(sid, psi, tuple(q_grid), cfg, theorems) for sid, psi in items]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_scan_item, work))
    else:
        results = [_scan_item(w) for w in work]
    reports = [r for rs, _ in results for r in rs]
    runtimes = {sid: t for (sid, _), (_, t) in zip(items, results)}
    return ScanResult(reports, summarize(reports, q_grid, len(items), cfg), runtimes)


def reports_to_csv_rows(reports: Iterable[dict]) -> list[list]:
    rows = [["state_id", "theorem", "q", "lhs", "rhs", "residual", "converged"]]
    for r in reports:
        if "error" in r:
            continue
        rows.append([r["state_id"], r["theorem"], repr(r["q"]), repr(r["lhs"]), repr(r["rhs"]),
                     repr(r["residual"]), r["converged"]])
    return rows
