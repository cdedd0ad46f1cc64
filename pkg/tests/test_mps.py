import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mpstdvp.errors import DimensionError, InvalidGaugeError, InvalidInputError
from mpstdvp.mpo import SIGMA_Z, SIGMA_X
from mpstdvp.mps import (
    MpsState, apply_local, audit_rank, canonicalize, density_matrices, dumps_state,
    entanglement_entropy, gauge_transform, is_left_orthonormal, is_right_orthonormal,
    loads_state, local_expectation, local_profile, move_center, norm, overlap, product_mps,
    random_mps, schmidt_spectrum,
)
from mpstdvp.oracle import dense_state, embed_local

UP, DOWN = np.array([1.0, 0.0]), np.array([0.0, 1.0])


def bell_state():
    # (|up down> + |down up>)/sqrt(2)
    a = np.zeros((1, 2, 2), dtype=complex)
    a[0, 0, 0] = a[0, 1, 1] = 1
    b = np.zeros((2, 2, 1), dtype=complex)
    b[0, 1, 0] = b[1, 0, 0] = 1 / np.sqrt(2)
    return MpsState([a, b])


def dense_cut_values(vec, n_sites, bond):
    return np.linalg.svd(vec.reshape(2 ** bond, 2 ** (n_sites - bond)), compute_uv=False)


# -- construction ---------------------------------------------------------------

def test_boundary_dims_enforced():
    with pytest.raises(DimensionError):
        MpsState([np.ones((2, 2, 1))])


def test_bond_chain_checked():
    with pytest.raises(DimensionError, match="bond 1"):
        MpsState([np.ones((1, 2, 2)), np.ones((3, 2, 1))])


def test_state_is_immutable():
    s = random_mps(3, 2, 2, seed=0)
    with pytest.raises(ValueError):
        s.tensors[0][0, 0, 0] = 5


def test_product_all_up():
    s = product_mps([UP] * 4)
    assert abs(norm(s) - 1) < 1e-14
    for b in range(5):
        np.testing.assert_allclose(schmidt_spectrum(s, b).values, [1.0])
    assert all(is_left_orthonormal(t) and is_right_orthonormal(t) for t in s.tensors)


def test_product_single_site():
    v = np.array([1, 1j]) / np.sqrt(2)
    np.testing.assert_allclose(dense_state(product_mps([v])).amplitudes, v, atol=1e-15)


def test_product_is_kronecker(rng):
    locs = [rng.normal(size=2) + 1j * rng.normal(size=2) for _ in range(3)]
    locs = [v / np.linalg.norm(v) for v in locs]
    ref = np.kron(np.kron(locs[0], locs[1]), locs[2])
    np.testing.assert_allclose(dense_state(product_mps(locs)).amplitudes, ref, atol=1e-14)


def test_product_zero_vector():
    with pytest.raises(InvalidInputError):
        product_mps([UP, [0.0, 0.0]])


def test_random_dims_capped():
    s = random_mps(2, 2, 7, seed=3)
    assert s.bond_dims == [1, 2, 1]
    assert random_mps(6, 2, 100, seed=0).bond_dims == [1, 2, 4, 8, 4, 2, 1]


def test_random_deterministic():
    a, b = random_mps(5, 2, 3, seed=11), random_mps(5, 2, 3, seed=11)
    for x, y in zip(a.tensors, b.tensors):
        np.testing.assert_array_equal(x, y)


def test_random_normalized_right_canonical():
    s = random_mps(6, 2, 4, seed=1)
    assert s.center == 0 and s.verify_gauge()
    assert abs(norm(s) - 1) < 1e-12


def test_random_density_matrices_full_rank():
    l, r = density_matrices(random_mps(6, 2, 4, seed=2))
    for m in l[1:-1] + r[1:-1]:
        ev = np.linalg.eigvalsh(m)
        assert ev.min() > 1e-10 * ev.max()


def test_random_rejects_bad_args():
    with pytest.raises(ValueError):
        random_mps(3, 1, 2)


# -- gauge --------------------------------------------------------------------------

def test_gauge_identity():
    s = random_mps(4, 2, 2, seed=0)
    out = gauge_transform(s, [np.eye(d) for d in s.bond_dims])
    for a, b in zip(s.tensors, out.tensors):
        np.testing.assert_allclose(a, b, atol=1e-14)
    assert out.gauge == "none"


def test_gauge_diagonal_preserves_state(rng):
    s = random_mps(4, 2, 2, seed=1)
    gs = [np.eye(1)] + [np.diag(rng.uniform(0.5, 2.0, size=d)) for d in s.bond_dims[1:-1]] + [np.eye(1)]
    out = gauge_transform(s, gs)
    v0, v1 = dense_state(s).amplitudes, dense_state(out).amplitudes
    assert abs(abs(np.vdot(v0, v1)) - np.vdot(v0, v0).real) < 1e-10


def test_gauge_unitary_keeps_spectra(rng):
    s = random_mps(5, 2, 3, seed=4)
    gs = [np.eye(1)]
    for d in s.bond_dims[1:-1]:
        q, _ = np.linalg.qr(rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)))
        gs.append(q)
    gs.append(np.eye(1))
    out = gauge_transform(s, gs)
    for b in range(6):
        np.testing.assert_allclose(schmidt_spectrum(out, b).values, schmidt_spectrum(s, b).values, atol=1e-12)


@settings(max_examples=15, deadline=None)
@given(n_sites=st.integers(2, 7), bond=st.integers(1, 4), seed=st.integers(0, 10**6))
def test_gauge_invariance_property(n_sites, bond, seed):
    rng = np.random.default_rng(seed)
    s = random_mps(n_sites, 2, bond, seed=rng)
    gs = [np.eye(1)] + [rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)) + 3 * np.eye(d)
                        for d in s.bond_dims[1:-1]] + [np.eye(1)]
    v0, v1 = dense_state(s).amplitudes, dense_state(gauge_transform(s, gs)).amplitudes
    assert np.linalg.norm(v1 - v0) <= 1e-10 * np.linalg.norm(v0)


def test_gauge_singular_rejected():
    s = random_mps(3, 2, 2, seed=0)
    gs = [np.eye(1), np.zeros((2, 2)), np.eye(2), np.eye(1)]
    with pytest.raises(InvalidGaugeError):
        gauge_transform(s, gs)


def test_gauge_boundary_must_be_one():
    s = random_mps(3, 2, 2, seed=0)
    with pytest.raises(InvalidGaugeError):
        gauge_transform(s, [2 * np.eye(1), np.eye(2), np.eye(2), np.eye(1)])


def test_no_inverse_routine_exposed():
    import mpstdvp.mps as mod
    assert not any("inv" in name.lower() for name in mod.__all__)


# -- canonical forms -----------------------------------------------------------------

def test_canonicalize_idempotent():
    s = random_mps(5, 2, 3, seed=5)
    again = canonicalize(s, "right")
    for a, b in zip(s.tensors, again.tensors):
        np.testing.assert_allclose(a, b, atol=1e-12)


def test_canonicalize_left_conditions():
    s = canonicalize(random_mps(5, 2, 3, seed=6), "left")
    assert all(is_left_orthonormal(t) for t in s.tensors[:-1])
    assert s.verify_gauge()


def test_canonicalize_preserves_dense(rng):
    tensors = [rng.normal(size=(1, 2, 3)), rng.normal(size=(3, 2, 3)),
               rng.normal(size=(3, 2, 2)), rng.normal(size=(2, 2, 1))]
    raw = MpsState(tensors)
    v = dense_state(raw).amplitudes
    v = v / np.linalg.norm(v)
    for target in ("left", "right", 2, ("bond", 2)):
        w = dense_state(canonicalize(raw, target)).amplitudes
        assert np.linalg.norm(w - v) <= 1e-10


def test_canonicalize_zero_state():
    with pytest.raises(InvalidInputError):
        canonicalize(MpsState([np.zeros((1, 2, 1)), np.zeros((1, 2, 1))]))


def test_bond_gauge_norm_is_frobenius():
    s = canonicalize(random_mps(5, 2, 3, seed=7), ("bond", 3))
    assert s.verify_gauge()
    assert abs(np.linalg.norm(s.bond_matrix) - norm(s)) < 1e-12


# -- center movement ------------------------------------------------------------------

def test_move_right_then_left_two_site_block():
    # A_C(n) returns up to a unitary on the far bond; the two-site block is invariant
    s = canonicalize(random_mps(5, 2, 3, seed=8), 2)
    back = move_center(move_center(s, 3), 2)
    blk = lambda x: np.einsum("asb,btc->astc", x.tensors[2], x.tensors[3])
    np.testing.assert_allclose(blk(back), blk(s), atol=1e-12)
    np.testing.assert_allclose(dense_state(back).amplitudes, dense_state(s).amplitudes, atol=1e-12)


def test_move_through_bond_recovers_center():
    s = canonicalize(random_mps(5, 2, 3, seed=8), 2)
    b = move_center(s, 3, bond=True)
    back = move_center(b, 2)
    np.testing.assert_allclose(back.tensors[2], s.tensors[2], atol=1e-12)


def test_product_bond_matrices_are_one():
    s = product_mps([UP, DOWN, UP])
    for b in range(4):
        c = canonicalize(s, ("bond", b)).bond_matrix
        np.testing.assert_allclose(np.abs(c), [[1.0]], atol=1e-14)


def test_move_keeps_fidelity():
    s = canonicalize(random_mps(6, 2, 4, seed=9), 0)
    v0 = dense_state(s).amplitudes
    for n in range(1, 6):
        s = move_center(s, n)
        assert s.verify_gauge()
        assert abs(abs(np.vdot(v0, dense_state(s).amplitudes)) - 1) < 1e-12


def test_center_consistency():
    s = canonicalize(random_mps(6, 2, 4, seed=10), 3)
    left = move_center(s, 3, bond=True)   # exposes C(3), A_L(3)
    right = move_center(s, 4, bond=True)  # exposes C(4); site 3 becomes A_L
    # A_L(3) C(3)... check A_L(n) C(n) = C(n-1) A_R(n) with n = 3 (0-based site 3, bonds 3/4)
    al, c_right = right.tensors[3], right.bond_matrix
    ar, c_left = left.tensors[3], left.bond_matrix
    lhs = np.einsum("asb,bc->asc", al, c_right)
    rhs = np.einsum("ab,bsc->asc", c_left, ar)
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_move_out_of_range():
    s = canonicalize(random_mps(3, 2, 2, seed=0), 2)
    with pytest.raises(IndexError):
        move_center(s, 3)
    with pytest.raises(IndexError):
        move_center(s, 0)


def test_move_requires_mixed_form():
    with pytest.raises(InvalidGaugeError):
        move_center(MpsState([np.ones((1, 2, 1))] * 2), 1)


# -- spectra, densities, observables ------------------------------------------------

def test_bell_spectrum_and_entropy():
    s = bell_state()
    np.testing.assert_allclose(schmidt_spectrum(s, 1).values, [2 ** -0.5] * 2, atol=1e-14)
    assert abs(entanglement_entropy(s, 1) - np.log(2)) < 1e-14


def test_spectrum_matches_dense_svd():
    s = random_mps(6, 2, 4, seed=12)
    v = dense_state(s).amplitudes
    for b in range(1, 6):
        ref = dense_cut_values(v, 6, b)
        got = schmidt_spectrum(s, b).values
        np.testing.assert_allclose(got, ref[: got.size], atol=1e-10)
        assert abs(np.sum(got ** 2) - 1) < 1e-12


def test_density_left_canonical_identity():
    l, _ = density_matrices(canonicalize(random_mps(5, 2, 3, seed=13), "left"))
    for m in l[:-1]:
        np.testing.assert_allclose(m, np.eye(m.shape[0]), atol=1e-10)


def test_density_trace_identity():
    s = canonicalize(random_mps(6, 2, 3, seed=14), 2)
    l, r = density_matrices(s)
    for a, b in zip(l, r):
        assert abs(np.trace(a @ b) - 1) < 1e-10
    assert abs(r[0][0, 0] - 1) < 1e-12 and abs(l[-1][0, 0] - 1) < 1e-12


def test_density_eigenvalues_are_schmidt():
    s = canonicalize(random_mps(6, 2, 4, seed=15), "left")
    _, r = density_matrices(s)
    for b in range(1, 6):
        ev = np.sort(np.linalg.eigvalsh(r[b]))[::-1]
        np.testing.assert_allclose(ev, schmidt_spectrum(s, b).values ** 2, atol=1e-10)
        c = canonicalize(s, ("bond", b)).bond_matrix
        np.testing.assert_allclose(r[b], c @ c.conj().T, atol=1e-10)


def test_overlap_and_norm():
    s = random_mps(5, 2, 3, seed=16)
    assert abs(overlap(s, s) - 1) < 1e-12
    t = random_mps(5, 2, 2, seed=17)
    ref = np.vdot(dense_state(s).amplitudes, dense_state(t).amplitudes)
    assert abs(overlap(s, t) - ref) < 1e-12


def test_overlap_mismatch():
    with pytest.raises(DimensionError):
        overlap(random_mps(3, 2, 2, seed=0), random_mps(4, 2, 2, seed=0))


def test_local_expectation_up():
    s = product_mps([UP] * 5)
    for n in range(5):
        assert abs(local_expectation(s, SIGMA_Z, n) - 1) < 1e-14


def test_local_expectation_matches_dense():
    s = random_mps(5, 2, 3, seed=18)
    v = dense_state(s).amplitudes
    prof = local_profile(s, SIGMA_X)
    for n in range(5):
        ref = np.vdot(v, embed_local(SIGMA_X, n, 5) @ v)
        assert abs(local_expectation(s, SIGMA_X, n) - ref) < 1e-12
        assert abs(prof[n] - ref) < 1e-12


def test_local_expectation_bad_operator():
    with pytest.raises(DimensionError):
        local_expectation(product_mps([UP] * 2), np.eye(3), 0)


def test_entropy_product_is_zero():
    assert entanglement_entropy(product_mps([UP, DOWN, UP]), 1) == 0.0


def test_apply_local_matches_dense():
    s = random_mps(4, 2, 2, seed=19)
    out = apply_local(s, SIGMA_X, 2)
    ref = embed_local(SIGMA_X, 2, 4) @ dense_state(s).amplitudes
    np.testing.assert_allclose(dense_state(out).amplitudes, ref, atol=1e-13)


def test_audit_rank_warns():
    s = product_mps([UP, UP, UP])
    # pad the bond with a zero direction
    a = np.zeros((1, 2, 2), dtype=complex)
    a[0, 0, 0] = 1
    b = np.zeros((2, 2, 1), dtype=complex)
    b[0, 0, 0] = 1
    with pytest.warns(RuntimeWarning):
        assert audit_rank(MpsState([a, b])) == [1]
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert audit_rank(random_mps(4, 2, 2, seed=0)) == []
    assert s.n_sites == 3


# -- checkpoint -------------------------------------------------------------------------

@pytest.mark.parametrize("target", ["right", 2, ("bond", 3)])
def test_checkpoint_roundtrip(target):
    s = canonicalize(random_mps(5, 2, 3, seed=20), target)
    back = loads_state(dumps_state(s))
    assert back.gauge == s.gauge and back.bond_dims == s.bond_dims
    for a, b in zip(s.tensors, back.tensors):
        np.testing.assert_array_equal(a, b)
    if s.bond is not None:
        np.testing.assert_array_equal(s.bond_matrix, back.bond_matrix)


def test_checkpoint_header():
    text = dumps_state(product_mps([UP, DOWN]))
    assert text.splitlines()[:5] == ["mps", "N: 2", "d: 2 2", "D: 1 1 1", "gauge: site:0"]


def test_checkpoint_rejects_garbage():
    with pytest.raises(DimensionError):
        loads_state("hello\n")
