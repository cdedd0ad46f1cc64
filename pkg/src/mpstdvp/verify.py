"""Oracle self-checks shared by the test suite and the ``verify`` task.

Each check returns ``(name, max_abs_deviation, tolerance)``.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .mpo import fit_exponential_sum, xy_nn_mpo, xy_power_law_mpo
from .mps import random_mps
from .oracle import (
    dense_ground, dense_hamiltonian, dense_state, dense_xy_hamiltonian, projection_error,
    projection_error_dense, projector_matrix, tangent_parameters, tangent_project_dense,
    two_site_project_dense,
)


class CheckResult(NamedTuple):
    test_name: str
    max_abs_deviation: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.max_abs_deviation <= self.tolerance)

    def as_dict(self) -> dict:
        return {"test_name": self.test_name, "max_abs_deviation": self.max_abs_deviation, "pass": self.passed}


def _random_vector(rng, dim):
    return rng.normal(size=dim) + 1j * rng.normal(size=dim)


def random_instances(count: int, seed: int):
    """``(state, xi)`` pairs with ``N`` in 5..6 and ``D`` in 2..3."""
    rng = np.random.default_rng(seed)
    for _ in range(count):
        n_sites = int(rng.integers(5, 7))
        bond = int(rng.integers(2, 4))
        state = random_mps(n_sites, 2, bond, seed=rng)
        yield state, _random_vector(rng, 2 ** n_sites)


def check_splitting_identity(instances: int = 20, seed: int = 0, tol: float = 1e-10) -> CheckResult:
    dev = 0.0
    for state, xi in random_instances(instances, seed):
        a = tangent_project_dense(state, xi, "splitting").amplitudes
        b = tangent_project_dense(state, xi, "least_squares").amplitudes
        dev = max(dev, float(np.max(np.abs(a - b))))
    return CheckResult("projector_splitting_equals_least_squares", dev, tol)


def check_projector_laws(instances: int = 4, seed: int = 1, tol: float = 1e-10) -> list[CheckResult]:
    out = {"idempotent": 0.0, "hermitian": 0.0}
    for state, _ in random_instances(instances, seed):
        for method in ("splitting", "least_squares"):
            p = projector_matrix(lambda s, x: tangent_project_dense(s, x, method), state)
            out["idempotent"] = max(out["idempotent"], float(np.max(np.abs(p @ p - p))))
            out["hermitian"] = max(out["hermitian"], float(np.max(np.abs(p - p.conj().T))))
        p2 = projector_matrix(two_site_project_dense, state)
        out["idempotent"] = max(out["idempotent"], float(np.max(np.abs(p2 @ p2 - p2))))
        out["hermitian"] = max(out["hermitian"], float(np.max(np.abs(p2 - p2.conj().T))))
    return [CheckResult(f"projector_{k}", v, tol) for k, v in out.items()]


def check_gauge_condition(instances: int = 5, seed: int = 2, tol: float = 1e-10) -> CheckResult:
    from .mps import canonicalize

    dev = 0.0
    for state, xi in random_instances(instances, seed):
        lc = canonicalize(state, "left").tensors
        params = tangent_parameters(state, xi)
        for n in range(state.n_sites - 1):
            g = np.einsum("asb,asc->bc", lc[n].conj(), params[n])
            dev = max(dev, float(np.max(np.abs(g))))
    return CheckResult("least_squares_left_gauge_condition", dev, tol)


def check_two_site_exactness(seed: int = 3, tol: float = 1e-10) -> CheckResult:
    h = xy_nn_mpo(4)
    state = random_mps(4, 2, 2, seed=seed)
    hpsi = dense_hamiltonian(h) @ dense_state(state).amplitudes
    dev = float(np.max(np.abs(two_site_project_dense(state, hpsi).amplitudes - hpsi)))
    return CheckResult("two_site_space_contains_nn_h_psi", dev, tol)


def check_two_site_range(seed: int = 4, tol: float = 1e-10) -> CheckResult:
    rng = np.random.default_rng(seed)
    state = random_mps(5, 2, 2, seed=rng)
    xi = _random_vector(rng, 32)
    p1 = tangent_project_dense(state, xi).amplitudes
    dev = float(np.max(np.abs(two_site_project_dense(state, p1).amplitudes - p1)))
    return CheckResult("two_site_range_contains_one_site_range", dev, tol)


def check_projection_error(seed: int = 5, tol: float = 1e-9) -> list[CheckResult]:
    h = xy_power_law_mpo(6, 1.0, 3.0)
    state = random_mps(6, 2, 2, seed=seed)
    dev = abs(projection_error(state, h) - projection_error_dense(state, h))
    full = random_mps(6, 2, 8, seed=seed)
    return [
        CheckResult("projection_error_tn_vs_dense", dev, tol),
        CheckResult("projection_error_full_rank", projection_error(full, h), tol),
    ]


def check_fits(tol: float = 1e-8) -> list[CheckResult]:
    out = []
    r = np.arange(1, 101, dtype=float)
    for alpha in (0.75, 1.5, 3.0, 6.0):
        fit = fit_exponential_sum(alpha, 100, tol)
        approx = sum(c * lam ** r for c, lam in fit.terms)
        direct = float(np.max(np.abs(approx - r ** -alpha)))
        out.append(CheckResult(f"exp_sum_fit_alpha_{alpha:g}", direct, tol))
    return out


def check_dense_ground(tol: float = 1e-10) -> CheckResult:
    e0, _ = dense_ground(dense_xy_hamiltonian(2))
    return CheckResult("dense_ground_xy_two_sites", abs(e0 + 1.0), tol)


def run_all(instances: int = 20, seed: int = 0, tol: float = 1e-10) -> list[CheckResult]:
    results = [check_splitting_identity(instances, seed, tol)]
    results += check_projector_laws(seed=seed + 1, tol=tol)
    results.append(check_gauge_condition(seed=seed + 2, tol=tol))
    results.append(check_two_site_exactness(seed=seed + 3, tol=tol))
    results.append(check_two_site_range(seed=seed + 4, tol=tol))
    results += check_projection_error(seed=seed + 5)
    results += check_fits()
    results.append(check_dense_ground(tol))
    return results
