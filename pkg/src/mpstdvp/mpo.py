"""Matrix product operators and Hamiltonian builders.

MPO site tensors have shape ``(M_left, d, d, M_right)`` with the physical
axes ordered (output, input). All builders use the lower-triangular finite
automaton layout: virtual state ``0`` means "nothing placed yet" and the last
virtual state means "interaction completed".
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import least_squares

from .errors import DimensionError, FitFailureError
from .mps import MpsState
from .tensor_core import as_tensor, contract

log = logging.getLogger(__name__)

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)
IDENTITY2 = np.eye(2, dtype=np.complex128)

DEFAULT_MAX_TERMS = 64


class Mpo:
    """Immutable sequence of MPO site tensors."""

    __slots__ = ("_tensors",)

    def __init__(self, tensors: Sequence[np.ndarray]):
        tensors = tuple(as_tensor(w, copy=True) for w in tensors)
        if not tensors:
            raise DimensionError("an MPO needs at least one site")
        for n, w in enumerate(tensors):
            if w.ndim != 4:
                raise DimensionError(f"site {n}: expected rank-4 tensor, got shape {w.shape}")
            if w.shape[1] != w.shape[2]:
                raise DimensionError(f"site {n}: physical axes differ {w.shape[1:3]}")
            if n > 0 and tensors[n - 1].shape[3] != w.shape[0]:
                raise DimensionError(f"bond {n}: MPO extents do not chain")
        if tensors[0].shape[0] != 1 or tensors[-1].shape[3] != 1:
            raise DimensionError("MPO boundary bond dimensions must be 1")
        for w in tensors:
            w.flags.writeable = False
        self._tensors = tensors

    @property
    def tensors(self) -> tuple[np.ndarray, ...]:
        return self._tensors

    @property
    def n_sites(self) -> int:
        return len(self._tensors)

    @property
    def phys_dims(self) -> list[int]:
        return [w.shape[1] for w in self._tensors]

    @property
    def bond_dims(self) -> list[int]:
        return [1] + [w.shape[3] for w in self._tensors]

    def __repr__(self):
        return f"Mpo(N={self.n_sites}, M={self.bond_dims})"


def _bulk_to_chain(bulk: np.ndarray, n_sites: int) -> Mpo:
    """Cut the first row / last column of a uniform bulk tensor at the boundaries."""
    if n_sites == 1:
        return Mpo([bulk[:1, :, :, -1:]])
    tensors = [bulk[:1]] + [bulk] * (n_sites - 2) + [bulk[..., -1:]]
    return Mpo(tensors)


def identity_mpo(n_sites: int, d: int) -> Mpo:
    w = np.eye(d, dtype=np.complex128).reshape(1, d, d, 1)
    return Mpo([w] * n_sites)


def _split_coupling(term, d):
    """Operator-Schmidt decomposition of one coupling into ``(A, B)`` channels."""
    if isinstance(term, (tuple, list)) and len(term) == 2:
        a, b = (np.asarray(x, dtype=np.complex128) for x in term)
        for x in (a, b):
            if x.ndim != 2 or x.shape[0] != x.shape[1]:
                raise DimensionError(f"coupling operators must be square, got {x.shape}")
        if a.shape != (d, d) or b.shape != (d, d):
            raise DimensionError("coupling operator dimension does not match the fields")
        return [(a, b)]
    h = np.asarray(term, dtype=np.complex128)
    if h.shape != (d * d, d * d):
        raise DimensionError(f"two-site coupling must be ({d * d}, {d * d}), got {h.shape}")
    # h[(s1 s2), (t1 t2)] -> m[(s1 t1), (s2 t2)]
    m = h.reshape(d, d, d, d).transpose(0, 2, 1, 3).reshape(d * d, d * d)
    u, s, vh = np.linalg.svd(m)
    keep = s > 1e-14 * max(s[0], 1e-300)
    return [
        ((u[:, k] * s[k]).reshape(d, d), vh[k].reshape(d, d))
        for k in np.flatnonzero(keep)
    ]


def nearest_neighbor_mpo(n_sites: int, terms=(), fields=(), d: int | None = None) -> Mpo:
    """MPO for ``sum_i sum_terms A_i B_{i+1} + sum_i sum_fields F_i``.

    Each coupling is either an ``(A, B)`` pair (one channel) or a ``d^2 x d^2``
    two-site matrix, which is split into channels by an operator SVD. The bond
    dimension is ``2 + number of channels``.
    """
    shapes = [np.shape(f)[0] for f in fields]
    if d is None:
        if shapes:
            d = shapes[0]
        elif terms:
            first = terms[0]
            d = np.shape(first[0])[0] if isinstance(first, (tuple, list)) else int(round(np.sqrt(np.shape(first)[0])))
        else:
            raise ValueError("cannot infer local dimension without terms or fields")
    for f in fields:
        if np.shape(f) != (d, d):
            raise DimensionError(f"field must be a square {d}x{d} matrix, got {np.shape(f)}")
    channels = [c for t in terms for c in _split_coupling(t, d)]
    m = 2 + len(channels)
    eye = np.eye(d, dtype=np.complex128)
    w = np.zeros((m, d, d, m), dtype=np.complex128)
    w[0, :, :, 0] = eye
    w[-1, :, :, -1] = eye
    for f in fields:
        w[0, :, :, -1] += np.asarray(f, dtype=np.complex128)
    for k, (a, b) in enumerate(channels):
        w[0, :, :, 1 + k] = a
        w[1 + k, :, :, -1] = b
    return _bulk_to_chain(w, n_sites)


def xy_nn_mpo(n_sites: int, coupling: float = 1.0) -> Mpo:
    """Nearest-neighbor XY chain ``(J/2) sum_i (X_i X_{i+1} + Y_i Y_{i+1})``."""
    half = 0.5 * coupling
    return nearest_neighbor_mpo(n_sites, [(half * SIGMA_X, SIGMA_X), (half * SIGMA_Y, SIGMA_Y)], d=2)


# -- exponential-sum fit of r^-alpha ----------------------------------------

@dataclass(frozen=True)
class ExpSumFit:
    """``r^-alpha ~ sum_k c_k lambda_k^r`` on ``r = 1..range``."""

    alpha: float
    coeffs: np.ndarray
    rates: np.ndarray
    max_abs_error: float
    range: int
    terms: list = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "terms", list(zip(self.coeffs.tolist(), self.rates.tolist())))

    @property
    def n_terms(self) -> int:
        return len(self.coeffs)

    def evaluate(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        return np.power.outer(self.rates, r).T @ self.coeffs

    def certify(self) -> float:
        """Recompute the maximal absolute error by direct evaluation."""
        r = np.arange(1, self.range + 1, dtype=float)
        return float(np.max(np.abs(self.evaluate(r) - r ** -self.alpha)))

    def to_json(self) -> str:
        return json.dumps({
            "alpha": self.alpha,
            "K": self.n_terms,
            "terms": [{"c": c, "lambda": lam} for c, lam in self.terms],
            "max_abs_error": self.max_abs_error,
            "R": self.range,
        }, indent=2)


def _pencil_rates(f: np.ndarray, k: int) -> np.ndarray | None:
    """Matrix-pencil estimate of ``k`` decay rates from the samples ``f(1..R)``."""
    n = f.size
    pencil = n // 2
    hankel = np.array([f[i:i + pencil + 1] for i in range(n - pencil)])
    _, _, vh = np.linalg.svd(hankel, full_matrices=False)
    if vh.shape[0] < k:
        return None
    v = vh[:k].T
    shift = np.linalg.lstsq(v[:-1], v[1:], rcond=None)[0]
    lam = np.linalg.eigvals(shift)
    if np.any(np.abs(lam.imag) > 1e-8 * np.abs(lam)) or np.any(lam.real <= 0):
        return None
    return np.sort(np.minimum(lam.real, 1.0))[::-1]


def _log_spaced_rates(alpha: float, r_max: int, k: int) -> np.ndarray:
    # decay lengths spread log-uniformly between ~0.3 and ~3 r_max
    lengths = np.geomspace(0.3, 3.0 * r_max, k)
    return np.exp(-1.0 / lengths)


def _solve_coeffs(rates, r, f):
    basis = np.power.outer(rates, r).T
    c, *_ = np.linalg.lstsq(basis, f, rcond=None)
    return c, basis @ c - f


def _refine(rates, r, f):
    """Variable-projection least squares on ``rates = exp(-exp(x))``."""
    x0 = np.log(-np.log(np.clip(rates, 1e-300, 1 - 1e-16)))

    def resid(x):
        return _solve_coeffs(np.exp(-np.exp(x)), r, f)[1]

    with np.errstate(over="ignore", under="ignore"):
        try:
            sol = least_squares(resid, x0, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15,
                                max_nfev=200 * (x0.size + 1))
        except (ValueError, np.linalg.LinAlgError):
            return rates
        return np.exp(-np.exp(sol.x))


def fit_exponential_sum(alpha: float, r_max: int, tol: float = 1e-8,
                        max_terms: int = DEFAULT_MAX_TERMS) -> ExpSumFit:
    """Fit ``r^-alpha`` for ``r = 1..r_max`` by the fewest exponentials reaching ``tol``.

    For each term count the rates are seeded by a matrix pencil on the
    sampled decay, by log-spaced rates and by the best rates of the previous
    term count plus one extra rate; the weights are solved by linear least
    squares and the rates refined by variable projection. The first term
    count whose directly evaluated max-abs error is below ``tol`` wins.
    ``alpha == 0`` is the exact single term ``c = lambda = 1``.
    """
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    if r_max < 2:
        raise ValueError("fit range must be at least 2")
    if not tol > 0:
        raise ValueError("tol must be positive")
    if alpha == 0:
        return ExpSumFit(0.0, np.ones(1), np.ones(1), 0.0, r_max)
    r = np.arange(1, r_max + 1, dtype=float)
    f = r ** -float(alpha)
    best = (np.inf, None)
    for k in range(1, min(max_terms, r_max) + 1):
        seeds = []
        pencil = _pencil_rates(f, k) if 2 * k <= r_max + 1 else None
        if pencil is not None:
            seeds.append(pencil)
        seeds.append(_log_spaced_rates(alpha, r_max, k))
        if best[1] is not None:
            prev = best[1][1]
            for extra in (np.exp(-1.0 / (3.0 * r_max)), np.exp(-1.0 / 0.3), np.sqrt(prev.min() * prev.max())):
                seeds.append(np.sort(np.append(prev, extra))[::-1])
        for rates in seeds:
            for candidate in (rates, _refine(rates, r, f)):
                candidate = np.clip(candidate, np.finfo(float).tiny, 1.0)
                c, res = _solve_coeffs(candidate, r, f)
                err = float(np.max(np.abs(res)))
                if err < best[0]:
                    best = (err, (c, candidate))
                if err < tol:
                    fit = ExpSumFit(float(alpha), c, candidate, err, r_max)
                    fit_err = fit.certify()
                    if fit_err < tol:
                        object.__setattr__(fit, "max_abs_error", fit_err)
                        log.debug("alpha=%g: %d terms, max error %.3e", alpha, k, fit_err)
                        return fit
    raise FitFailureError(
        f"no exponential sum with <= {max_terms} terms fits r^-{alpha} to {tol:g} (best {best[0]:.3e})",
        best[0],
    )


def xy_power_law_mpo(n_sites: int, coupling: float = 1.0, alpha: float = 3.0, tol: float = 1e-8,
                     fit: ExpSumFit | None = None) -> Mpo:
    """Long-range XY chain ``(1/2) sum_{i<j} J/|i-j|^alpha (X_i X_j + Y_i Y_j)``.

    The power law is replaced by an exponential sum fitted on distances
    ``1..max(N-1, 2)``; the MPO bond dimension is ``2K + 2``.
    """
    if n_sites < 2:
        raise ValueError("the XY chain needs at least two sites")
    if fit is None:
        fit = fit_exponential_sum(alpha, max(n_sites - 1, 2), tol)
    ops = (SIGMA_X, SIGMA_Y)
    k_terms = fit.n_terms
    m = 2 * k_terms + 2
    w = np.zeros((m, 2, 2, m), dtype=np.complex128)
    w[0, :, :, 0] = IDENTITY2
    w[-1, :, :, -1] = IDENTITY2
    for k, (c, lam) in enumerate(fit.terms):
        for o, op in enumerate(ops):
            ch = 1 + 2 * k + o
            # start: weight (J/2) c_k; each later site multiplies by lambda_k
            w[0, :, :, ch] = 0.5 * coupling * c * op
            w[ch, :, :, ch] = lam * IDENTITY2
            w[ch, :, :, -1] = lam * op
    return _bulk_to_chain(w, n_sites)


def mpo_expectation(state: MpsState, h: Mpo) -> float:
    """``<psi|H|psi>`` (not divided by the norm) via left transfer blocks."""
    if state.n_sites != h.n_sites or state.phys_dims != h.phys_dims:
        raise DimensionError("state and MPO have incompatible sites")
    env = np.ones((1, 1, 1), dtype=np.complex128)
    for a, w in zip(state.site_tensors(), h.tensors):
        env = _extend_left(env, a, w)
    val = complex(env[0, 0, 0])
    if abs(val.imag) > 1e-10 * max(1.0, abs(val.real)):
        log.warning("expectation value has imaginary part %.3e; operator may not be Hermitian", val.imag)
    return val.real


def _extend_left(env, a, w):
    # env[a, m, a'] conj(A)[a, s, b] W[m, s, t, m'] A[a', t, b'] -> [b, m', b']
    t = np.tensordot(env, a, axes=(2, 0))            # a m t b'
    t = np.tensordot(t, w, axes=((1, 2), (0, 2)))    # a b' s m'
    t = np.tensordot(a.conj(), t, axes=((0, 1), (0, 2)))  # b b' m'
    return t.transpose(0, 2, 1)


def dumps_mpo(h: Mpo) -> str:
    from .tensor_core import dumps_tensor

    head = f"mpo\nN: {h.n_sites}\nd: {' '.join(map(str, h.phys_dims))}\nM: {' '.join(map(str, h.bond_dims))}\n"
    return head + "".join(dumps_tensor(w) for w in h.tensors)


def loads_mpo(text: str) -> Mpo:
    from .tensor_core import read_tensor

    lines = text.splitlines()
    if not lines or lines[0].strip() != "mpo":
        raise DimensionError("line 1: not an MPO checkpoint")
    n_sites = int(lines[1].partition(":")[2])
    pos, tensors = 4, []
    for _ in range(n_sites):
        w, pos = read_tensor(lines, pos)
        tensors.append(w)
    return Mpo(tensors)


__all__ = [
    "Mpo",
    "ExpSumFit",
    "identity_mpo",
    "nearest_neighbor_mpo",
    "xy_nn_mpo",
    "fit_exponential_sum",
    "xy_power_law_mpo",
    "mpo_expectation",
    "dumps_mpo",
    "loads_mpo",
    "SIGMA_X",
    "SIGMA_Y",
    "SIGMA_Z",
]
