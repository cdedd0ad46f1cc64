import numpy as np
import pytest

from mpstdvp.environments import (
    EnvironmentStack, dense_effective_h1, dense_effective_h2, dense_effective_k0, init_environments,
)
from mpstdvp.errors import StalenessError
from mpstdvp.mpo import identity_mpo, mpo_expectation, xy_nn_mpo, xy_power_law_mpo
from mpstdvp.mps import MpsState, canonicalize, move_center, random_mps
from mpstdvp.oracle import dense_hamiltonian, dense_state


def embedding(state, sites, shape):
    """Columns: dense states with the center block at ``sites`` replaced by unit vectors."""
    size = int(np.prod(shape))
    cols = []
    for j in range(size):
        e = np.zeros(size, dtype=complex)
        e[j] = 1
        block = e.reshape(shape)
        ts = list(state.tensors)
        if len(sites) == 1:
            ts[sites[0]] = block
        elif len(sites) == 2:
            n = sites[0]
            # split the two-site block without truncation through an identity on the pair
            dl, d1, d2, dr = shape
            ts[n] = np.eye(dl * d1).reshape(dl, d1, dl * d1)
            ts[n + 1] = block.reshape(dl * d1, d2, dr)
        cols.append(dense_state(MpsState(ts)).amplitudes)
    return np.array(cols).T


def bond_embedding(state, b):
    ts = list(state.tensors)
    dl, dr = state.bond_matrix.shape
    cols = []
    for j in range(dl * dr):
        e = np.zeros(dl * dr, dtype=complex)
        e[j] = 1
        cols.append(dense_state(MpsState(ts, bond=b, bond_matrix=e.reshape(dl, dr))).amplitudes)
    return np.array(cols).T


def test_identity_blocks_are_identity():
    s = canonicalize(random_mps(5, 2, 3, seed=0), "left")
    stack = init_environments(s, identity_mpo(5, 2))
    for b in range(5):
        d = s.bond_dims[b]
        np.testing.assert_allclose(stack.left[b][:, 0, :], np.eye(d), atol=1e-12)


def test_identity_matvecs_are_identity(rng):
    s = canonicalize(random_mps(5, 2, 3, seed=1), 2)
    stack = init_environments(s, identity_mpo(5, 2))
    x = rng.normal(size=s.tensors[2].shape) + 0j
    np.testing.assert_allclose(stack.h1_matvec(2, x), x, atol=1e-12)
    b = move_center(s, 2, bond=True)
    st2 = init_environments(b, identity_mpo(5, 2))
    c = rng.normal(size=b.bond_matrix.shape) + 0j
    np.testing.assert_allclose(st2.k0_matvec(2, c), c, atol=1e-12)
    x2 = rng.normal(size=(s.bond_dims[2], 2, 2, s.bond_dims[4])) + 0j
    np.testing.assert_allclose(stack.h2_matvec(2, x2), x2, atol=1e-12)


def test_single_site_chain_has_only_boundaries():
    s = canonicalize(random_mps(1, 2, 1, seed=0), 0)
    stack = init_environments(s, identity_mpo(1, 2))
    assert stack.left[0].shape == (1, 1, 1) and stack.right[1].shape == (1, 1, 1)
    assert stack.left[1] is None and stack.right[0] is None


def test_incremental_equals_rebuild():
    h = xy_power_law_mpo(6, 1.0, 3.0)
    s = canonicalize(random_mps(6, 2, 4, seed=2), 2)
    stack = init_environments(s, h)
    s2 = move_center(s, 3)
    stack.refresh(2, "left", s2.tensors[2])
    fresh = init_environments(s2, h)
    for b in range(4):
        np.testing.assert_allclose(stack.left[b], fresh.left[b], atol=1e-12)
    for b in range(4, 7):
        np.testing.assert_allclose(stack.right[b], fresh.right[b], atol=1e-12)


def test_staleness_detected():
    h = xy_nn_mpo(5)
    s = canonicalize(random_mps(5, 2, 2, seed=3), 2)
    stack = init_environments(s, h)
    with pytest.raises(StalenessError):
        stack.h1_matvec(3, s.tensors[3])
    with pytest.raises(StalenessError):
        stack.refresh(4, "left", s.tensors[4])
    # a right refresh at site 1 invalidates every left block containing site 1
    b = move_center(canonicalize(s, 1), 1, bond=True)
    stack.refresh(2, "right", b.tensors[2])
    stack.refresh(1, "right", b.tensors[1])
    assert stack.left_cursor == 1 and stack.right_cursor == 1
    stack.k0_matvec(1, b.bond_matrix)
    with pytest.raises(StalenessError):
        stack.h1_matvec(2, b.tensors[2])


@pytest.mark.parametrize("n_sites,site", [(3, 1), (4, 2), (5, 0), (5, 4)])
def test_h1_matches_dense_projection(n_sites, site):
    h = xy_power_law_mpo(n_sites, 1.0, 1.5) if n_sites > 2 else xy_nn_mpo(n_sites)
    s = canonicalize(random_mps(n_sites, 2, 3, seed=4), site)
    stack = init_environments(s, h)
    shape = s.tensors[site].shape
    p = embedding(s, [site], shape)
    ref = p.conj().T @ dense_hamiltonian(h) @ p
    got = dense_effective_h1(stack, site, shape)
    np.testing.assert_allclose(got, ref, atol=1e-10)
    assert np.max(np.abs(got - got.conj().T)) < 1e-10


def test_k0_matches_dense_projection():
    h = xy_power_law_mpo(4, 1.0, 3.0)
    s = canonicalize(random_mps(4, 2, 2, seed=5), ("bond", 2))
    stack = init_environments(s, h)
    p = bond_embedding(s, 2)
    ref = p.conj().T @ dense_hamiltonian(h) @ p
    got = dense_effective_k0(stack, 2, s.bond_matrix.shape)
    np.testing.assert_allclose(got, ref, atol=1e-10)
    assert np.max(np.abs(got - got.conj().T)) < 1e-10


def test_h2_matches_dense_projection():
    h = xy_power_law_mpo(4, 1.0, 3.0)
    s = canonicalize(random_mps(4, 2, 2, seed=6), 1)
    stack = init_environments(s, h)
    shape = (s.bond_dims[1], 2, 2, s.bond_dims[3])
    p = embedding(s, [1, 2], shape)
    ref = p.conj().T @ dense_hamiltonian(h) @ p
    got = dense_effective_h2(stack, 1, shape)
    np.testing.assert_allclose(got, ref, atol=1e-10)
    assert np.max(np.abs(got - got.conj().T)) < 1e-10


def test_h2_whole_chain_is_dense_h():
    h = xy_nn_mpo(2)
    s = canonicalize(random_mps(2, 2, 2, seed=7), 0)
    stack = init_environments(s, h)
    got = dense_effective_h2(stack, 0, (1, 2, 2, 1))
    np.testing.assert_allclose(got, dense_hamiltonian(h), atol=1e-14)


def test_h2_rejects_last_site():
    s = canonicalize(random_mps(3, 2, 2, seed=0), 2)
    stack = init_environments(s, xy_nn_mpo(3))
    with pytest.raises(IndexError):
        stack.h2_matvec(2, np.zeros((2, 2, 2, 1)))


def test_energy_consistency():
    h = xy_power_law_mpo(6, 1.0, 3.0)
    s = canonicalize(random_mps(6, 2, 4, seed=8), 3)
    e = mpo_expectation(s, h)
    stack = init_environments(s, h)
    ac = s.tensors[3]
    assert abs(np.vdot(ac, stack.h1_matvec(3, ac)) - e) < 1e-9
    b = move_center(s, 3, bond=True)
    sb = init_environments(b, h)
    c = b.bond_matrix
    assert abs(np.vdot(c, sb.k0_matvec(3, c)) - e) < 1e-9
    s2 = canonicalize(s, 2)
    st2 = init_environments(s2, h)
    blk = np.einsum("asb,btc->astc", s2.tensors[2], s2.tensors[3])
    assert abs(np.vdot(blk, st2.h2_matvec(2, blk)) - e) < 1e-9


def test_mismatched_mpo_rejected():
    with pytest.raises(ValueError):
        EnvironmentStack(xy_nn_mpo(3), 4)
