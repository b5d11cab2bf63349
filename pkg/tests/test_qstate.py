import json

import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.testing import assert_allclose

from qtrade.qstate import (
    DensityMatrix,
    PureState,
    StateError,
    canonical_state,
    dumps_state,
    haar_random_pure,
    ket,
    loads_state,
    maximally_mixed,
    partial_trace,
    random_mixed,
    spectral,
    state_from_dict,
    state_to_dict,
    tensor,
)

from conftest import BELL, random_rank1_povm

seeds = st.integers(min_value=0, max_value=2**63 - 1)


def test_basis_tensor():
    psi = tensor(ket(0, [2]), ket(0, [2]))
    assert_allclose(psi.amplitudes, [1, 0, 0, 0])
    assert psi.dims == (2, 2)


def test_mixed_tensor():
    rho = tensor(maximally_mixed([2]), maximally_mixed([2]))
    assert_allclose(rho.matrix, np.eye(4) / 4)
    assert rho.dims == (2, 2)


def test_ghz_normalized():
    ghz = canonical_state("GHZ")
    assert abs(np.vdot(ghz.amplitudes, ghz.amplitudes) - 1) < 1e-15
    expected = np.zeros(8)
    expected[[0, 7]] = 1 / np.sqrt(2)
    assert_allclose(ghz.amplitudes, expected)


def test_w_and_product():
    w = canonical_state("W")
    expected = np.zeros(8)
    expected[[1, 2, 4]] = 1 / np.sqrt(3)
    assert_allclose(w.amplitudes, expected)
    assert_allclose(canonical_state("PRODUCT").amplitudes, np.eye(8)[0])


def test_qutrit_ghz_and_bad_names():
    g3 = canonical_state("GHZ", [3, 3, 3])
    assert_allclose(partial_trace(g3, [0]).matrix, np.eye(3) / 3, atol=1e-15)
    with pytest.raises(StateError):
        canonical_state("W", [2, 2, 3])
    with pytest.raises(StateError):
        canonical_state("GHZ", [2, 2, 3])
    with pytest.raises(StateError):
        canonical_state("CLUSTER")


def test_validation():
    with pytest.raises(StateError):
        PureState(np.array([1.0, 1.0]), (2,))
    with pytest.raises(StateError):
        PureState(np.array([1.0, 0, 0]), (2,))
    with pytest.raises(StateError):
        DensityMatrix(np.array([[1.0, 0.1], [0.0, 0.0]]), (2,))
    with pytest.raises(StateError):
        DensityMatrix(np.diag([1.5, -0.5]), (2,))
    with pytest.raises(StateError):
        DensityMatrix(np.diag([0.5, 0.6]), (2,))
    with pytest.raises(StateError):
        PureState(np.eye(128)[0], (2,) * 7)


def test_partial_trace_examples():
    assert_allclose(partial_trace(BELL, [0]).matrix, np.eye(2) / 2, atol=1e-15)
    assert_allclose(partial_trace(canonical_state("GHZ"), [0]).matrix, np.eye(2) / 2, atol=1e-15)
    with pytest.raises(StateError):
        partial_trace(BELL, [])
    with pytest.raises(StateError):
        partial_trace(BELL, [2])


def test_partial_trace_w_ab_against_direct_matrix():
    # oracle: trace out C from the full 8x8 projector by explicit index sums
    w = canonical_state("W").amplitudes
    full = np.outer(w, w.conj())
    direct = np.zeros((4, 4), complex)
    for i in range(4):
        for j in range(4):
            direct[i, j] = sum(full[2 * i + c, 2 * j + c] for c in range(2))
    rho_ab = partial_trace(canonical_state("W"), [0, 1])
    assert_allclose(rho_ab.matrix, direct, atol=1e-15)
    assert_allclose(spectral(rho_ab).eigenvalues, [2 / 3, 1 / 3, 0, 0], atol=1e-12)


def test_partial_trace_reorders_kept_parties():
    psi = haar_random_pure([2, 3], 5)
    ab = partial_trace(psi, [0, 1]).matrix.reshape(2, 3, 2, 3)
    ba = partial_trace(psi, [1, 0])
    assert ba.dims == (3, 2)
    assert_allclose(ba.matrix, ab.transpose(1, 0, 3, 2).reshape(6, 6), atol=1e-15)


def test_spectral_examples():
    assert_allclose(spectral(maximally_mixed([2])).eigenvalues, [0.5, 0.5])
    assert_allclose(spectral(ket(0, [2]).density()).eigenvalues, [1, 0])
    rho_a = partial_trace(canonical_state("W"), [0])
    assert_allclose(spectral(rho_a).eigenvalues, [2 / 3, 1 / 3], atol=1e-15)


def test_spectral_rejects_non_hermitian():
    with pytest.raises(StateError):
        spectral(np.array([[0.5, 0.3], [0.0, 0.5]]))


def test_spectral_reconstruction_many(rng):
    worst_rec = worst_sum = 0.0
    for _ in range(1000):
        d = int(rng.integers(2, 7))
        rho = random_mixed(d, int(rng.integers(1, d + 1)), rng)
        sp = spectral(rho)
        v, lam = sp.eigenvectors, sp.eigenvalues
        assert np.all(np.diff(lam) <= 0) and lam.min() >= 0
        worst_rec = max(worst_rec, np.max(np.abs(rho.matrix - (v * lam) @ v.conj().T)))
        worst_sum = max(worst_sum, abs(lam.sum() - 1))
        assert_allclose(v.conj().T @ v, np.eye(d), atol=1e-10)
    assert worst_rec <= 1e-10
    assert worst_sum <= 1e-10


def test_haar_determinism_and_norm():
    a = haar_random_pure([2, 2, 2], 99)
    b = haar_random_pure([2, 2, 2], 99)
    assert np.array_equal(a.amplitudes, b.amplitudes)
    assert not np.array_equal(a.amplitudes, haar_random_pure([2, 2, 2], 100).amplitudes)


@given(seeds, st.sampled_from([[2, 2, 2], [2, 2, 3], [3, 4], [5]]))
def test_haar_norm(seed, dims):
    psi = haar_random_pure(dims, seed)
    assert abs(np.linalg.norm(psi.amplitudes) - 1) <= 1e-12


def test_haar_marginal_mean():
    # Monte-Carlo oracle: <0|rho_A|0> averages to 1/2 under the Haar measure
    rng = np.random.default_rng(2024)
    vals = [partial_trace(haar_random_pure([2, 2, 2], rng), [0]).matrix[0, 0].real for _ in range(10_000)]
    assert abs(np.mean(vals) - 0.5) <= 0.02


def test_random_mixed():
    pure = random_mixed(3, 1, 4)
    assert abs(pure.purity() - 1) <= 1e-10
    a, b = random_mixed(2, 2, 11), random_mixed(2, 2, 11)
    assert np.array_equal(a.matrix, b.matrix)
    for seed in range(50):
        rho = random_mixed(4, 2, seed)
        assert abs(np.trace(rho.matrix).real - 1) <= 1e-12
        assert np.linalg.matrix_rank(rho.matrix, tol=1e-10) <= 2
    with pytest.raises(ValueError):
        random_mixed(2, 3, 0)
    with pytest.raises(ValueError):
        random_mixed(2, 0, 0)


@given(seeds)
def test_partial_trace_of_product(seed):
    rng = np.random.default_rng(seed)
    rho, sigma = random_mixed(2, 2, rng), random_mixed(3, 2, rng)
    joint = tensor(rho, sigma)
    assert_allclose(partial_trace(joint, [0]).matrix, rho.matrix, atol=1e-10)
    assert_allclose(partial_trace(joint, [1]).matrix, sigma.matrix, atol=1e-10)


@given(seeds, st.sampled_from([[2, 2, 2], [2, 2, 3], [2, 3, 2]]))
def test_measurement_consistency(seed, dims):
    """tr_C of the AC state steered by outcome x equals the A state left by measuring B."""
    rng = np.random.default_rng(seed)
    psi = haar_random_pure(dims, rng)
    da, db, dc = dims
    povm = random_rank1_povm(db, db * db, rng)
    t = psi.tensor_
    rho_ab = partial_trace(psi, [0, 1]).matrix.reshape(da, db, da, db)
    for v in povm.vectors:
        phi = np.einsum("b,abc->ac", v.conj(), t)
        steered = phi @ phi.conj().T
        measured = np.einsum("aibj,j,i->ab", rho_ab, v, v.conj())
        assert_allclose(steered, measured, atol=1e-10)


def test_serialization_round_trip(rng):
    psi = haar_random_pure([2, 3], rng)
    back = loads_state(dumps_state(psi))
    assert isinstance(back, PureState) and back.dims == (2, 3)
    assert_allclose(back.amplitudes, psi.amplitudes, rtol=1e-15, atol=0)
    rho = random_mixed(4, 3, rng, dims=[2, 2])
    obj = json.loads(json.dumps(state_to_dict(rho)))
    back = state_from_dict(obj)
    assert isinstance(back, DensityMatrix) and back.dims == (2, 2)
    assert_allclose(back.matrix, rho.matrix, rtol=1e-15, atol=1e-17)


def test_serialization_rejects_garbage():
    with pytest.raises(StateError):
        loads_state("{not json")
    with pytest.raises(StateError):
        state_from_dict({"dims": [2], "re": [1, 0]})
    with pytest.raises(StateError):
        state_from_dict({"dims": [3], "re": [1, 0], "im": [0, 0]})
