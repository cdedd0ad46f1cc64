import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from mpstdvp.errors import InvalidInputError
from mpstdvp.krylov import KrylovConfig, expm_apply, ground_state
from mpstdvp.mpo import xy_nn_mpo
from mpstdvp.oracle import dense_hamiltonian

from conftest import random_hermitian


def test_config_validation():
    with pytest.raises(ValueError):
        KrylovConfig(tol=0)
    with pytest.raises(ValueError):
        KrylovConfig(max_dim=1)


def test_expm_zero_coefficient(rng):
    v = rng.normal(size=5) + 0j
    res = expm_apply(lambda x: 2 * x, v, 0)
    np.testing.assert_array_equal(res.vector, v)


def test_expm_zero_operator(rng):
    v = rng.normal(size=6) + 1j * rng.normal(size=6)
    res = expm_apply(lambda x: 0 * x, v, -0.3j)
    np.testing.assert_allclose(res.vector, v, atol=1e-15)
    assert res.converged


def test_expm_random_hermitian(rng):
    h = random_hermitian(rng, 8)
    v = rng.normal(size=8) + 1j * rng.normal(size=8)
    res = expm_apply(lambda x: h @ x, v, -0.3j)
    np.testing.assert_allclose(res.vector, scipy.linalg.expm(-0.3j * h) @ v, atol=1e-10)


@pytest.mark.parametrize("z", [-0.05j, 0.4j, -0.7, -2.0j])
def test_expm_larger_space(rng, z):
    h = random_hermitian(rng, 60) / 10
    v = rng.normal(size=60) + 1j * rng.normal(size=60)
    res = expm_apply(lambda x: h @ x, v, z, KrylovConfig(tol=1e-12, max_dim=40))
    assert res.converged
    ref = scipy.linalg.expm(z * h) @ v
    assert np.linalg.norm(res.vector - ref) <= 1e-10 * np.linalg.norm(v)


def test_expm_keeps_shape(rng):
    h = random_hermitian(rng, 12)
    v = rng.normal(size=(2, 3, 2)) + 0j
    res = expm_apply(lambda x: (h @ x.ravel()).reshape(x.shape), v, -0.1j)
    assert res.vector.shape == (2, 3, 2)


def test_expm_eigenvector_phase_exact(rng):
    h = random_hermitian(rng, 10)
    lam, vecs = np.linalg.eigh(h)
    v = vecs[:, 3]
    res = expm_apply(lambda x: h @ x, v, -0.8j)
    assert res.dim == 1
    np.testing.assert_allclose(res.vector, np.exp(-0.8j * lam[3]) * v, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6), dt=st.floats(0.01, 1.0))
def test_expm_unitarity(seed, dt):
    rng = np.random.default_rng(seed)
    h = random_hermitian(rng, 20)
    v = rng.normal(size=20) + 1j * rng.normal(size=20)
    tol = 1e-12
    res = expm_apply(lambda x: h @ x, v, -1j * dt, KrylovConfig(tol=tol))
    assert abs(np.linalg.norm(res.vector) - np.linalg.norm(v)) <= 10 * tol * np.linalg.norm(v)


def test_expm_flags_max_dim(rng):
    h = random_hermitian(rng, 100)
    v = rng.normal(size=100) + 0j
    res = expm_apply(lambda x: h @ x, v, -5j, KrylovConfig(tol=1e-14, max_dim=3))
    assert not res.converged and res.dim == 3


def test_expm_zero_vector():
    with pytest.raises(InvalidInputError):
        expm_apply(lambda x: x, np.zeros(3), -1j)


def test_ground_diagonal():
    h = np.diag([3.0, -1.0, 2.0])
    res = ground_state(lambda x: h @ x, np.ones(3))
    assert abs(res.value + 1) < 1e-14
    np.testing.assert_allclose(np.abs(res.vector), [0, 1, 0], atol=1e-12)


def test_ground_xy_pair():
    h = dense_hamiltonian(xy_nn_mpo(2))
    res = ground_state(lambda x: h @ x, np.array([0.3, 1.0, 0.2, 0.1]))
    assert abs(res.value + 1) < 1e-12


def test_ground_random_32(rng):
    h = random_hermitian(rng, 32)
    cfg = KrylovConfig(tol=1e-12, max_dim=30)
    res = ground_state(lambda x: h @ x, rng.normal(size=32) + 0j, cfg)
    assert res.converged
    assert abs(res.value - np.linalg.eigvalsh(h)[0]) < 1e-9
    assert abs(np.linalg.norm(res.vector) - 1) < 1e-12
    assert np.linalg.norm(h @ res.vector - res.value * res.vector) <= cfg.tol * (abs(res.value) + 1) + 1e-12


def test_ground_restarts_monotone(rng):
    n = 400
    h = np.diag(np.linspace(0, 1, n) ** 2) + 1e-3 * random_hermitian(rng, n)
    cfg = KrylovConfig(tol=1e-10, max_dim=8, max_restarts=500)
    res = ground_state(lambda x: h @ x, rng.normal(size=n) + 0j, cfg)
    assert len(res.history) > 2
    assert all(b <= a + 1e-12 for a, b in zip(res.history, res.history[1:]))
    assert abs(res.value - np.linalg.eigvalsh(h)[0]) < 1e-8


def test_ground_reports_non_convergence(rng):
    n = 300
    h = np.diag(np.linspace(0, 1, n) ** 2)
    res = ground_state(lambda x: h @ x, np.ones(n), KrylovConfig(tol=1e-14, max_dim=4, max_restarts=2))
    assert not res.converged
    assert np.isfinite(res.value)


def test_ground_zero_start():
    with pytest.raises(InvalidInputError):
        ground_state(lambda x: x, np.zeros(4))
