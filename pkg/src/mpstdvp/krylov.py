"""Lanczos kernels for Hermitian operators given only as matrix-vector products."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .errors import InvalidInputError

log = logging.getLogger(__name__)

Matvec = Callable[[np.ndarray], np.ndarray]

# a residual below this (relative to the Ritz scale) means the Krylov space is invariant
_BREAKDOWN = 1e-14


@dataclass(frozen=True)
class KrylovConfig:
    tol: float = 1e-12
    max_dim: int = 30
    reorthogonalize: bool = True
    max_restarts: int = 50

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("Krylov tol must be positive")
        if self.max_dim < 2:
            raise ValueError("Krylov max_dim must be at least 2")


class ExpmResult(NamedTuple):
    vector: np.ndarray
    error: float
    dim: int
    converged: bool


class EigResult(NamedTuple):
    value: float
    vector: np.ndarray
    residual: float
    converged: bool
    history: tuple = ()  # lowest Ritz value at each restart and at exit


def _expm_tridiag(alpha, beta, z, shifted=False):
    """``exp(z T) e_1`` for the real symmetric tridiagonal ``T``.

    With ``shifted`` the result is divided by ``exp(max Re(z lambda))`` so that
    large imaginary-time steps neither overflow nor underflow.
    """
    k = len(alpha)
    t = np.diag(alpha)
    if k > 1:
        t += np.diag(beta[: k - 1], 1) + np.diag(beta[: k - 1], -1)
    evals, evecs = np.linalg.eigh(t)
    expo = z * evals
    if shifted:
        expo = expo - np.max(expo.real)
    return evecs @ (np.exp(expo) * evecs[0, :])


def expm_apply(matvec: Matvec, v: np.ndarray, z: complex, cfg: KrylovConfig | None = None,
               normalize: bool = False) -> ExpmResult:
    """Approximate ``exp(z H) v`` in a Lanczos basis.

    The error estimate after ``k`` steps is ``beta_k |[exp(z T_k) e_1]_k| ||v||``,
    the first term of the standard a-posteriori series. Iteration stops once it
    drops below ``cfg.tol * ||v||`` or the basis hits ``cfg.max_dim`` (then
    ``converged`` is False). For imaginary ``z`` the result has the norm of
    ``v`` up to rounding because ``exp(z T_k)`` is unitary.

    ``normalize=True`` returns the unit vector along ``exp(z H) v`` and judges
    the error relative to it; this stays finite for arbitrarily long
    imaginary-time steps.
    """
    cfg = cfg or KrylovConfig()
    shape = np.shape(v)
    v = np.asarray(v, dtype=np.complex128).ravel()
    beta0 = np.linalg.norm(v)
    if beta0 == 0:
        raise InvalidInputError("cannot exponentiate onto a zero vector")
    if z == 0:
        out = v / beta0 if normalize else v.copy()
        return ExpmResult(out.reshape(shape), 0.0, 0, True)

    kmax = min(cfg.max_dim, v.size)
    basis = np.empty((kmax, v.size), dtype=np.complex128)
    alpha, beta = [], []
    q = v / beta0
    converged = False
    err = np.inf
    for j in range(kmax):
        basis[j] = q
        w = np.asarray(matvec(q.reshape(shape)), dtype=np.complex128).ravel()
        a = np.vdot(q, w).real
        w = w - a * q
        if j > 0:
            w -= beta[j - 1] * basis[j - 1]
        if cfg.reorthogonalize:
            w -= basis[: j + 1].T @ (basis[: j + 1].conj() @ w)
        b = np.linalg.norm(w)
        alpha.append(a)
        beta.append(b)
        y = _expm_tridiag(alpha, beta, z, shifted=normalize)
        if normalize:
            y = y / np.linalg.norm(y)
        err = b * abs(y[-1]) * beta0
        scale = max(abs(x) for x in alpha) + b
        if err <= cfg.tol * beta0 or b <= _BREAKDOWN * max(scale, 1e-300):
            converged = True
            break
        q = w / b
    k = len(alpha)
    out = basis[:k].T @ y
    if normalize:
        out /= np.linalg.norm(out)
    else:
        out *= beta0
    if not converged:
        log.debug("expm_apply reached max_dim=%d with error estimate %.3e", kmax, err)
        # the basis spans the whole space when kmax equals its dimension
        converged = kmax == v.size
    return ExpmResult(out.reshape(shape), float(err), k, converged)


def ground_state(matvec: Matvec, v0: np.ndarray, cfg: KrylovConfig | None = None) -> EigResult:
    """Lowest eigenpair by thick-restarted Lanczos, warm-started from ``v0``.

    The basis is extended by the (fully orthogonalized) residual of the
    lowest Ritz vector, which spans the same space as plain Lanczos. When it
    reaches ``cfg.max_dim`` vectors it is compressed to the lowest
    ``max_dim // 2`` Ritz vectors, so the Ritz value never increases. Converged
    means ``||H u - theta u|| <= tol (|theta| + 1)``; after ``cfg.max_restarts``
    compressions the best pair is returned with ``converged=False``.
    """
    cfg = cfg or KrylovConfig()
    shape = np.shape(v0)
    u = np.asarray(v0, dtype=np.complex128).ravel()
    nu = np.linalg.norm(u)
    if nu == 0:
        raise InvalidInputError("ground_state needs a nonzero start vector")
    kmax = min(cfg.max_dim, u.size)
    keep = max(1, kmax // 2)

    def apply(x):
        return np.asarray(matvec(x.reshape(shape)), dtype=np.complex128).ravel()

    basis = (u / nu)[None, :]
    images = apply(basis[0])[None, :]
    proj = np.array([[np.vdot(basis[0], images[0]).real]], dtype=np.complex128)
    restarts = 0
    history: list[float] = []
    while True:
        proj = 0.5 * (proj + proj.conj().T)
        evals, evecs = np.linalg.eigh(proj)
        theta = float(evals[0])
        x = evecs[:, 0]
        ritz = x @ basis
        resid = x @ images - theta * ritz
        res = float(np.linalg.norm(resid))
        scale = max(abs(theta), 1.0)
        if res <= cfg.tol * (abs(theta) + 1.0) or len(basis) == u.size:
            history.append(theta)
            return EigResult(theta, (ritz / np.linalg.norm(ritz)).reshape(shape), res, True, tuple(history))
        if len(basis) >= kmax:
            history.append(theta)
            if restarts >= cfg.max_restarts:
                break
            restarts += 1
            basis = evecs[:, :keep].T @ basis
            images = evecs[:, :keep].T @ images
            proj = np.diag(evals[:keep]).astype(np.complex128)
        # twice is enough to orthogonalize against the whole basis
        w = resid - basis.T @ (basis.conj() @ resid)
        w -= basis.T @ (basis.conj() @ w)
        b = np.linalg.norm(w)
        if b <= _BREAKDOWN * scale:
            history.append(theta)
            return EigResult(theta, (ritz / np.linalg.norm(ritz)).reshape(shape), res, True, tuple(history))
        w /= b
        hw = apply(w)
        col = basis.conj() @ hw
        diag = np.vdot(w, hw).real
        proj = np.block([[proj, col[:, None]], [col.conj()[None, :], np.array([[diag]])]])
        basis = np.vstack([basis, w])
        images = np.vstack([images, hw])
    log.debug("ground_state not converged: residual %.3e", res)
    return EigResult(theta, (ritz / np.linalg.norm(ritz)).reshape(shape), res, False, tuple(history))
