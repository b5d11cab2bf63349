import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from qtrade.ensemble import povm_to_ensemble
from qtrade.entropy import tsallis_entropy
from qtrade.measures import (
    BoundSide,
    Measure,
    compute,
    decomposition_value,
    measurement_value,
    q_cc,
    q_discord,
    q_entanglement,
    q_eoa,
    q_ud,
    q_ue,
    reevaluate,
)
from qtrade.optimize import OptConfig
from qtrade.qstate import (
    DensityMatrix,
    canonical_state,
    haar_random_pure,
    ket,
    maximally_mixed,
    partial_trace,
    random_mixed,
    tensor,
)

from conftest import BELL, random_rank1_povm

LN2 = math.log(2)
FAST = OptConfig(restarts=8)


def _vn(eigs):
    eigs = np.asarray(eigs)
    eigs = eigs[eigs > 1e-15]
    return float(-np.sum(eigs * np.log(eigs)))


def wootters_eof(rho):
    """Two-qubit entanglement of formation from the concurrence (independent oracle)."""
    yy = np.kron([[0, -1j], [1j, 0]], [[0, -1j], [1j, 0]])
    tilde = yy @ rho.conj() @ yy
    w, v = np.linalg.eigh(rho)
    sqrt_rho = (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T
    lams = np.sqrt(np.clip(np.linalg.eigvalsh(sqrt_rho @ tilde @ sqrt_rho), 0, None))[::-1]
    c = max(0.0, lams[0] - lams[1] - lams[2] - lams[3])
    x = (1 + math.sqrt(1 - c * c)) / 2
    return _vn([x, 1 - x]), c


def grid_cc_qubit(rho_ab, n_theta=61, n_phi=61):
    """Max Holevo quantity over projective qubit measurements on B by brute-force grid."""
    t = rho_ab.reshape(2, 2, 2, 2)
    s_a = _vn(np.linalg.eigvalsh(np.einsum("aibi->ab", t)))
    best = -np.inf
    for th in np.linspace(0, np.pi, n_theta):
        for ph in np.linspace(0, 2 * np.pi, n_phi):
            up = np.array([np.cos(th / 2), np.exp(1j * ph) * np.sin(th / 2)])
            down = np.array([-np.exp(-1j * ph) * np.sin(th / 2), np.cos(th / 2)])
            val = s_a
            for v in (up, down):
                m = np.einsum("aibj,j,i->ab", t, v, v.conj())
                p = np.trace(m).real
                if p > 1e-14:
                    val -= p * _vn(np.linalg.eigvalsh(m / p))
            best = max(best, val)
    return best


GHZ = canonical_state("GHZ")
W = canonical_state("W")
GHZ_AB = partial_trace(GHZ, [0, 1])
GHZ_AC = partial_trace(GHZ, [0, 2])
W_AB = partial_trace(W, [0, 1])
PURE_PRODUCT = ket(0, [2, 2])


# -- examples ----------------------------------------------------------------

def test_q_entanglement_examples():
    rep = q_entanglement(BELL, 2)
    assert rep.value == 0.5 and rep.bound_side is BoundSide.EXACT and rep.certificate is None
    for q in (1, 1.5, 2, 3):
        rep = q_entanglement(GHZ_AC, q)
        assert abs(rep.value) <= 1e-8
        assert rep.bound_side is BoundSide.UPPER


def test_w_entanglement_of_formation_matches_wootters():
    oracle, conc = wootters_eof(W_AB.matrix)
    assert abs(conc - 2 / 3) < 1e-12
    x = (1 + math.sqrt(5) / 3) / 2
    assert abs(oracle - _vn([x, 1 - x])) < 1e-14
    assert abs(q_entanglement(W_AB, 1).value - oracle) <= 1e-4


@pytest.mark.parametrize("seed", range(3))
def test_random_two_qubit_eof_matches_wootters(seed):
    rho = random_mixed(4, 2, seed, dims=[2, 2])
    assert abs(q_entanglement(rho, 1).value - wootters_eof(rho.matrix)[0]) <= 1e-6


def test_q_eoa_examples():
    rep = q_eoa(BELL, 1)
    assert rep.value == pytest.approx(LN2, abs=1e-15) and rep.bound_side is BoundSide.EXACT
    # oracle: the X-basis decomposition of GHZ's rho_AC into two Bell states
    plus = np.array([1, 0, 0, 1]) / np.sqrt(2)
    minus = np.array([1, 0, 0, -1]) / np.sqrt(2)
    mix = 0.5 * (np.outer(plus, plus) + np.outer(minus, minus))
    assert_allclose(mix, GHZ_AC.matrix, atol=1e-15)
    for seed in (0, 1, 2):
        rep = q_eoa(GHZ_AC, 1, OptConfig(seed=seed))
        assert abs(rep.value - LN2) <= 1e-8 and rep.bound_side is BoundSide.LOWER
    # I/4 decomposes into the Bell basis, and E^a can never exceed S(rho_A) = ln 2
    assert abs(q_eoa(maximally_mixed([2, 2]), 1).value - LN2) <= 1e-8


def test_q_cc_examples():
    for q in (1, 2, 3):
        assert abs(q_cc(PURE_PRODUCT, q, FAST).value) <= 1e-12
    mixed_product = tensor(random_mixed(2, 2, 1), random_mixed(2, 2, 2))
    assert abs(q_cc(mixed_product, 1, FAST).value) <= 1e-10
    rep = q_cc(BELL, 1)
    assert abs(rep.value - LN2) <= 1e-6 and rep.bound_side is BoundSide.LOWER
    assert abs(grid_cc_qubit(BELL.density().matrix) - LN2) <= 1e-12
    for q in (1, 1.5, 2, 3):
        expected = LN2 if q == 1 else (1 - 2 ** (1 - q)) / (q - 1)
        assert abs(q_cc(GHZ_AB, q).value - expected) <= 1e-8


@pytest.mark.parametrize("seed", range(3))
def test_q_cc_against_grid_oracle(seed):
    # rank-1 POVMs include projective ones, so the search must reach at least the grid optimum
    rho = random_mixed(4, 3, seed + 40, dims=[2, 2])
    assert q_cc(rho, 1).value >= grid_cc_qubit(rho.matrix) - 1e-6


def test_q_ue_examples():
    for q in (1, 2):
        assert abs(q_ue(PURE_PRODUCT, q, FAST).value) <= 1e-12
    psi = haar_random_pure([2, 3], 3)
    rep = q_ue(psi, 2)
    assert rep.bound_side is BoundSide.EXACT
    assert abs(rep.value - tsallis_entropy(partial_trace(psi, [0]), 2)) <= 1e-12
    rep = q_ue(GHZ_AB, 1)
    assert abs(rep.value) <= 1e-8 and rep.bound_side is BoundSide.UPPER


def test_q_discord_examples():
    mixed_product = tensor(random_mixed(2, 2, 5), random_mixed(2, 2, 6))
    assert abs(q_discord(mixed_product, 1, FAST).value) <= 1e-10
    assert abs(q_discord(BELL, 1).value - LN2) <= 1e-6
    cc_state = DensityMatrix(np.diag([0.5, 0, 0, 0.5]), (2, 2))
    assert abs(q_discord(cc_state, 1).value) <= 1e-8
    assert q_discord(BELL, 1).bound_side is BoundSide.UPPER


def test_q_ud_examples():
    rep = q_ud(BELL, 2)
    assert rep.value == 0.5 and rep.bound_side is BoundSide.EXACT
    assert abs(q_ud(PURE_PRODUCT, 1, FAST).value) <= 1e-12
    mixed_product = tensor(random_mixed(2, 2, 5), random_mixed(2, 2, 6))
    assert abs(q_ud(mixed_product, 1, FAST).value) <= 1e-10
    rep = q_ud(GHZ_AB, 1)
    assert abs(rep.value - LN2) <= 1e-8 and rep.bound_side is BoundSide.LOWER


def test_measures_reject_q_below_one():
    for fn in (q_entanglement, q_eoa, q_cc, q_ue, q_discord, q_ud):
        with pytest.raises(ValueError):
            fn(BELL, 0.5)


def test_compute_dispatch_and_bad_input():
    assert compute("q-entanglement", BELL, 2).value == 0.5
    assert compute(Measure.QUD, BELL, 2).value == 0.5
    with pytest.raises(ValueError):
        compute("q-entanglement", GHZ, 2)
    with pytest.raises(ValueError):
        compute("not-a-measure", BELL, 2)


# -- properties --------------------------------------------------------------

@given(st.integers(min_value=0, max_value=2**32 - 1), st.sampled_from([1.0, 1.5, 2.0, 3.0]),
       st.sampled_from([[2, 2], [2, 3], [3, 2]]))
def test_pure_path_consistency(seed, q, dims):
    psi = haar_random_pure(dims, seed)
    s_a = tsallis_entropy(partial_trace(psi, [0]), q)
    s_b = tsallis_entropy(partial_trace(psi, [1]), q)
    assert abs(s_a - s_b) <= 1e-9
    for fn in (q_entanglement, q_eoa, q_ue):
        rep = fn(psi, q)
        assert rep.bound_side is BoundSide.EXACT and abs(rep.value - s_a) <= 1e-12
    assert abs(q_ud(psi, q).value - s_b) <= 1e-12


@settings(max_examples=8)
@given(st.integers(min_value=0, max_value=2**32 - 1), st.sampled_from([1.0, 2.0, 3.0]))
def test_ordering_and_nonnegativity(seed, q):
    rho = random_mixed(4, 3, seed, dims=[2, 2])
    cc, ue = q_cc(rho, q, FAST), q_ue(rho, q, FAST)
    e, eoa = q_entanglement(rho, q, FAST), q_eoa(rho, q, FAST)
    assert ue.value <= cc.value + 1e-9
    assert eoa.value >= e.value - 1e-9
    assert e.m_outcomes == eoa.m_outcomes
    for rep in (cc, ue, e, eoa):
        assert rep.value >= 0


@pytest.mark.parametrize("measure", list(Measure))
def test_continuity_at_q_one(measure):
    rho = random_mixed(4, 3, 17, dims=[2, 2])
    at_one = compute(measure, rho, 1.0).value
    near = compute(measure, rho, 1 + 1e-6).value
    assert abs(near - at_one) <= 1e-3


@given(st.integers(min_value=0, max_value=2**32 - 1), st.sampled_from([1.0, 1.5, 2.0, 3.0]),
       st.sampled_from([[2, 2, 2], [2, 2, 3], [2, 3, 2]]))
def test_pointwise_trade_off_for_any_povm(seed, q, dims):
    """J part plus E part equals S_q(rho_A) for every rank-1 POVM on B, no optimization."""
    rng = np.random.default_rng(seed)
    psi = haar_random_pure(dims, rng)
    db = dims[1]
    povm = random_rank1_povm(db, int(rng.integers(db, db * db + 1)), rng)
    s_a = tsallis_entropy(partial_trace(psi, [0]), q)
    chi = measurement_value(partial_trace(psi, [0, 1]), povm, q)
    e_part = decomposition_value(povm_to_ensemble(psi, povm), q)
    assert abs(chi + e_part - s_a) <= 1e-9


@pytest.mark.parametrize("measure", list(Measure))
def test_certificates_reevaluate(measure):
    rho = random_mixed(6, 3, 9, dims=[2, 3])
    rep = compute(measure, rho, 2.0, FAST)
    assert abs(reevaluate(rep, rho) - rep.value) <= 1e-10
    d = rep.to_dict()
    assert d["measure"] == measure.value and d["q"] == 2.0
    assert d["opt"]["per_restart_values"]


def test_report_determinism():
    rho = random_mixed(4, 2, 3, dims=[2, 2])
    a, b = q_eoa(rho, 1.5, FAST).to_dict(), q_eoa(rho, 1.5, FAST).to_dict()
    assert a == b


def test_cap_is_reported_and_respected():
    rho = random_mixed(4, 2, 3, dims=[2, 2])
    assert q_entanglement(rho, 2, FAST).m_outcomes == 4
    assert q_cc(rho, 2, FAST).m_outcomes == 4
    rep = q_cc(rho, 2, FAST.with_(m_outcomes=3))
    assert rep.m_outcomes == 3 and len(rep.certificate.vectors) <= 3
    with pytest.raises(ValueError):
        q_cc(rho, 2, FAST.with_(m_outcomes=1))
