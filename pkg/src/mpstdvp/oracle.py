"""Brute-force dense oracles and tangent-space diagnostics.

Dense amplitudes use lexicographic order with site 0 as the slowest index,
which is what a row-major contraction of the MPS produces. Local basis state
0 is spin up (``sigma^z = +1``).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .environments import EnvironmentStack, build_blocks
from .errors import DimensionError, HermiticityError, SingularPointError, SizeGuardError
from .mpo import Mpo
from .mps import MpsState, canonicalize, overlap, schmidt_spectrum
from .tensor_core import qr_positive

MAX_AMPLITUDES = 2 ** 14


@dataclass(frozen=True)
class DenseState:
    dims: tuple[int, ...]
    amplitudes: np.ndarray

    @property
    def n_sites(self) -> int:
        return len(self.dims)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.amplitudes, dtype=dtype)


def _amplitudes(v) -> np.ndarray:
    return v.amplitudes if isinstance(v, DenseState) else np.asarray(v)


def _guard(dims: Sequence[int]):
    size = int(np.prod(dims, dtype=object))
    if size > MAX_AMPLITUDES:
        raise SizeGuardError(f"{size} amplitudes exceed the dense guard of {MAX_AMPLITUDES}")
    return size


def dense_state(state: MpsState) -> DenseState:
    dims = tuple(state.phys_dims)
    _guard(dims)
    psi = np.ones((1, 1), dtype=np.complex128)
    for a in state.site_tensors():
        psi = np.tensordot(psi, a, axes=(1, 0)).reshape(-1, a.shape[2])
    return DenseState(dims, psi.reshape(-1))


def dense_hamiltonian(h: Mpo) -> np.ndarray:
    _guard(h.phys_dims)
    op = np.ones((1, 1, 1), dtype=np.complex128)
    for w in h.tensors:
        # op[(s), (t), m] W[m, s', t', m'] -> [(s s'), (t t'), m']
        t = np.tensordot(op, w, axes=(2, 0))
        rows, cols = op.shape[0] * w.shape[1], op.shape[1] * w.shape[2]
        op = t.transpose(0, 2, 1, 3, 4).reshape(rows, cols, w.shape[3])
    return op[:, :, 0]


def audit_hermitian(mat: np.ndarray, tol: float = 1e-8) -> None:
    dev = np.max(np.abs(mat - mat.conj().T), initial=0.0)
    if dev > tol:
        raise HermiticityError(f"matrix deviates from Hermitian by {dev:.3e}")


class SpectralPropagator:
    """Cached eigendecomposition of a Hermitian matrix for repeated evolutions."""

    def __init__(self, hamiltonian: np.ndarray):
        audit_hermitian(hamiltonian)
        self.evals, self.evecs = np.linalg.eigh(hamiltonian)

    def evolve(self, v, t: complex) -> np.ndarray:
        """``exp(-i H t) v``; normalized when ``t`` has an imaginary part."""
        v = np.asarray(_amplitudes(v))
        coeff = self.evecs.conj().T @ v
        out = self.evecs @ (np.exp(-1j * self.evals * t) * coeff)
        if np.imag(t) != 0:
            out = out / np.linalg.norm(out)
        return out

    def ground(self) -> tuple[float, np.ndarray]:
        return float(self.evals[0]), self.evecs[:, 0].astype(np.complex128)


def dense_evolve(v, hamiltonian: np.ndarray, t: complex):
    """Exact evolution by eigendecomposition; returns the same type as ``v``."""
    if t == 0:
        return v
    out = SpectralPropagator(hamiltonian).evolve(v, t)
    if isinstance(v, DenseState):
        return DenseState(v.dims, out)
    return out


def dense_ground(hamiltonian: np.ndarray) -> tuple[float, np.ndarray]:
    audit_hermitian(hamiltonian)
    evals, evecs = np.linalg.eigh(hamiltonian)
    return float(evals[0]), evecs[:, 0].astype(np.complex128)


def embed_local(op: np.ndarray, site: int, n_sites: int, d: int = 2) -> np.ndarray:
    out = np.ones((1, 1), dtype=np.complex128)
    for n in range(n_sites):
        out = np.kron(out, op if n == site else np.eye(d))
    return out


def dense_xy_hamiltonian(n_sites: int, coupling: float = 1.0, alpha: float | None = None) -> np.ndarray:
    """Exact ``(1/2) sum_{i<j} J/|i-j|^alpha (X_i X_j + Y_i Y_j)`` as a real matrix.

    ``alpha=None`` keeps only nearest-neighbour pairs. Built from the
    hopping form: the pair operator swaps antiparallel spins with amplitude 2.
    """
    _guard([2] * n_sites)
    dim = 2 ** n_sites
    idx = np.arange(dim)
    mat = np.zeros((dim, dim))
    for i in range(n_sites):
        for j in range(i + 1, n_sites):
            if alpha is None and j != i + 1:
                continue
            amp = coupling if alpha is None else coupling / (j - i) ** alpha
            bi, bj = n_sites - 1 - i, n_sites - 1 - j
            differ = ((idx >> bi) & 1) != ((idx >> bj) & 1)
            src = idx[differ]
            dst = src ^ ((1 << bi) | (1 << bj))
            mat[dst, src] += amp
    return mat


def fidelity(a: MpsState, b: MpsState) -> float:
    if a.n_sites != b.n_sites or a.phys_dims != b.phys_dims:
        raise DimensionError("fidelity needs states with matching sites")
    ab = overlap(a, b)
    na = np.sqrt(overlap(a, a).real)
    nb = np.sqrt(overlap(b, b).real)
    return float(min(abs(ab) / (na * nb), 1.0))


# -- tangent-space projectors (dense) ---------------------------------------------

def _check_full_rank(state: MpsState, rtol: float = 1e-10):
    for b in range(1, state.n_sites):
        s = schmidt_spectrum(state, b).values
        if s.size != state.bond_dims[b] or s[-1] <= rtol * s[0]:
            raise SingularPointError(f"bond {b} is rank deficient; tangent space is ill-defined")


def _block_bases(state: MpsState):
    """Orthonormal block bases: ``left[b]`` is ``(d^b, D_b)``, ``right[b]`` is ``(D_b, d^(N-b))``."""
    lc = canonicalize(state, "left").tensors
    rc = canonicalize(state, "right").tensors
    n_sites = state.n_sites
    left = [np.ones((1, 1), dtype=np.complex128)]
    for a in lc:
        left.append(np.tensordot(left[-1], a, axes=(1, 0)).reshape(-1, a.shape[2]))
    right = [np.ones((1, 1), dtype=np.complex128)]
    for a in reversed(rc):
        right.append(np.tensordot(a, right[-1], axes=(2, 0)).reshape(a.shape[0], -1))
    right.reverse()
    # the boundary blocks carry the norm; keep them as exact unit vectors
    left[n_sites] = left[n_sites] / np.linalg.norm(left[n_sites])
    right[0] = right[0] / np.linalg.norm(right[0])
    return lc, rc, left, right


def _prepare(state, xi):
    dims = tuple(state.phys_dims)
    _guard(dims)
    vec = np.asarray(_amplitudes(xi), dtype=np.complex128).ravel()
    if vec.size != int(np.prod(dims)):
        raise DimensionError("dense vector length does not match the state")
    return dims, vec


def _sandwich(pl, x, pr):
    # pl acts on the left block index, pr (as ``x @ pr``) on the right one
    return np.einsum("ij,jsk,kl->isl", pl, x, pr)


def tangent_project_dense(state: MpsState, xi, method: str = "splitting") -> DenseState:
    """Project a dense vector onto the MPS tangent space at ``state``.

    ``method='splitting'`` sums the left/right block projectors term by term;
    ``method='least_squares'`` solves for the gauge-fixed parameters
    ``B(n) = F(n) - A_L(n) G(n)`` and assembles the tangent vector from them.
    """
    dims, vec = _prepare(state, xi)
    _check_full_rank(state)
    lc, _, left, right = _block_bases(state)
    n_sites = len(dims)
    if method == "splitting":
        out = np.zeros_like(vec)
        for n in range(n_sites):
            pl = left[n] @ left[n].conj().T
            pr = right[n + 1].conj().T @ right[n + 1]
            x = vec.reshape(left[n].shape[0], dims[n], -1)
            out += _sandwich(pl, x, pr).ravel()
        for b in range(1, n_sites):
            pl = left[b] @ left[b].conj().T
            pr = right[b].conj().T @ right[b]
            out -= (pl @ vec.reshape(pl.shape[0], -1) @ pr).ravel()
        return DenseState(dims, out)
    if method == "least_squares":
        params = tangent_parameters(state, vec, lc, left, right)
        return DenseState(dims, assemble_tangent(params, left, right))
    raise ValueError(f"unknown projection method {method!r}")


def tangent_parameters(state, vec, lc=None, left=None, right=None) -> list[np.ndarray]:
    """Gauge-fixed tangent parameters ``B(n)`` of the projection of ``vec``."""
    if left is None:
        lc, _, left, right = _block_bases(state)
    dims = state.phys_dims
    n_sites = len(dims)
    params = []
    for n in range(n_sites):
        x = vec.reshape(left[n].shape[0], dims[n], -1)
        f = np.einsum("ia,isj,bj->asb", left[n].conj(), x, right[n + 1].conj())
        if n < n_sites - 1:
            g = np.einsum("asb,asc->bc", lc[n].conj(), f)
            f = f - np.tensordot(lc[n], g, axes=(2, 0))
        params.append(f)
    return params


def assemble_tangent(params, left, right) -> np.ndarray:
    out = 0
    for n, b in enumerate(params):
        out = out + np.einsum("ia,asb,bj->isj", left[n], b, right[n + 1]).ravel()
    return out


def two_site_project_dense(state: MpsState, xi) -> DenseState:
    """Project onto the span of two-site variations by the alternating block sum."""
    dims, vec = _prepare(state, xi)
    n_sites = len(dims)
    if n_sites < 2:
        raise ValueError("two-site projector needs at least two sites")
    _check_full_rank(state)
    _, _, left, right = _block_bases(state)
    out = np.zeros_like(vec)
    for n in range(n_sites - 1):
        pl = left[n] @ left[n].conj().T
        pr = right[n + 2].conj().T @ right[n + 2]
        x = vec.reshape(left[n].shape[0], dims[n] * dims[n + 1], -1)
        out += _sandwich(pl, x, pr).ravel()
    for n in range(1, n_sites - 1):
        pl = left[n] @ left[n].conj().T
        pr = right[n + 1].conj().T @ right[n + 1]
        x = vec.reshape(left[n].shape[0], dims[n], -1)
        out -= _sandwich(pl, x, pr).ravel()
    return DenseState(dims, out)


def projector_matrix(project, state: MpsState) -> np.ndarray:
    """Materialize a dense projector by applying it to every basis vector (test use)."""
    dim = int(np.prod(state.phys_dims))
    cols = []
    for j in range(dim):
        e = np.zeros(dim, dtype=np.complex128)
        e[j] = 1.0
        cols.append(project(state, e).amplitudes)
    return np.array(cols).T


# -- efficient projection error ----------------------------------------------------

def _tangent_mps(lc, rc, params):
    """MPS of bond ``2D`` representing ``sum_n A_L..A_L B(n) A_R..A_R``."""
    n_sites = len(params)
    if n_sites == 1:
        return [params[0]]
    out = []
    for n in range(n_sites):
        b = params[n]
        if n == 0:
            out.append(np.concatenate([lc[0], b], axis=2))
        elif n == n_sites - 1:
            out.append(np.concatenate([b, rc[n]], axis=0))
        else:
            dl, d, dr = b.shape
            t = np.zeros((2 * dl, d, 2 * dr), dtype=np.complex128)
            t[:dl, :, :dr] = lc[n]
            t[:dl, :, dr:] = b
            t[dl:, :, dr:] = rc[n]
            out.append(t)
    return out


def _apply_mpo(tensors, h: Mpo):
    out = []
    for a, w in zip(tensors, h.tensors):
        # W[m, s, t, m'] A[a, t, b] -> [(a m), s, (b m')]
        t = np.tensordot(a, w, axes=(1, 2))  # a b m s m'
        dl, dr, ml, d, mr = t.shape
        out.append(t.transpose(0, 2, 3, 1, 4).reshape(dl * ml, d, dr * mr))
    return out


def _difference(x, y):
    """Site tensors of ``|x> - |y>`` by direct-sum stacking."""
    n_sites = len(x)
    if n_sites == 1:
        return [x[0] - y[0]]
    out = []
    for n, (a, b) in enumerate(zip(x, y)):
        if n == 0:
            out.append(np.concatenate([a, -b], axis=2))
        elif n == n_sites - 1:
            out.append(np.concatenate([a, b], axis=0))
        else:
            t = np.zeros((a.shape[0] + b.shape[0], a.shape[1], a.shape[2] + b.shape[2]), dtype=np.complex128)
            t[: a.shape[0], :, : a.shape[2]] = a
            t[a.shape[0]:, :, a.shape[2]:] = b
            out.append(t)
    return out


def _qr_norm(tensors) -> float:
    carry = np.ones((1, 1), dtype=np.complex128)
    for a in tensors:
        a = np.tensordot(carry, a, axes=(1, 0))
        dl, d, dr = a.shape
        _, carry = qr_positive(a.reshape(dl * d, dr), "left")
    return float(abs(carry[0, 0]))


def projection_error(state: MpsState, h: Mpo) -> float:
    """``||(1 - P_T) H |psi>||`` without dense vectors.

    The tangent projection of ``H|psi>`` is assembled from
    ``F(n) = H(n) A_C(n)`` and ``G(n) = K(n) C(n)`` in one sweep, written as a
    bond-``2D`` MPS, subtracted from the exact MPO-MPS product and the norm of
    the difference taken by a QR sweep. This avoids the cancellation of
    ``<H^2> - ||P H psi||^2``.
    """
    if state.n_sites != h.n_sites:
        raise DimensionError("state and MPO have different lengths")
    psi = canonicalize(state, "right")
    scale = np.sqrt(overlap(state, state).real)
    rc = list(psi.tensors)
    ts = list(psi.tensors)
    n_sites = len(ts)
    stack = EnvironmentStack(h, n_sites)
    build_blocks(stack, ts, 0, 1)
    lc, params = [], []
    for n in range(n_sites):
        f = stack.h1_matvec(n, ts[n])
        if n == n_sites - 1:
            params.append(f)
            lc.append(ts[n])
            break
        dl, d, dr = ts[n].shape
        q, c = qr_positive(ts[n].reshape(dl * d, dr), "left")
        al = q.reshape(dl, d, -1)
        stack.refresh(n, "left", al)
        g = stack.k0_matvec(n + 1, c)
        params.append(f - np.tensordot(al, g, axes=(2, 0)))
        lc.append(al)
        ts[n + 1] = np.tensordot(c, ts[n + 1], axes=(1, 0))
    hpsi = _apply_mpo(rc, h)
    tangent = _tangent_mps(lc, rc, params)
    return scale * _qr_norm(_difference(hpsi, tangent))


def projection_error_dense(state: MpsState, h: Mpo) -> float:
    """Dense cross-check of :func:`projection_error`."""
    hpsi = dense_hamiltonian(h) @ dense_state(state).amplitudes
    return float(np.linalg.norm(hpsi - tangent_project_dense(state, hpsi).amplitudes))


# -- exact TDVP flow (dense) -------------------------------------------------------

def mps_from_dense(vec, dims: Sequence[int], bond_dims: Sequence[int]) -> MpsState:
    """Left-to-right SVD factorization of ``vec`` with the given bond dimensions."""
    vec = np.asarray(_amplitudes(vec), dtype=np.complex128)
    tensors = []
    rest = vec.reshape(1, -1)
    for n, d in enumerate(dims[:-1]):
        dl = rest.shape[0]
        m = rest.reshape(dl * d, -1)
        u, s, vh = np.linalg.svd(m, full_matrices=False)
        k = bond_dims[n + 1]
        tensors.append(u[:, :k].reshape(dl, d, k))
        rest = s[:k, None] * vh[:k]
    tensors.append(rest.reshape(rest.shape[0], dims[-1], 1))
    return MpsState(tensors, center=len(dims) - 1)


def dense_tdvp_flow(state: MpsState, h: Mpo, t: float, rtol: float = 1e-12):
    """Integrate ``d psi/dt = -i P_T(psi) H psi`` densely with an adaptive Runge-Kutta method.

    The exact TDVP flow on the fixed-bond manifold, used to measure the
    splitting error of the integrators when ``P_T`` is not the identity.
    """
    from scipy.integrate import solve_ivp

    hmat = dense_hamiltonian(h)
    dims, bonds = state.phys_dims, state.bond_dims

    def rhs(_, y):
        psi = mps_from_dense(y, dims, bonds)
        return -1j * tangent_project_dense(psi, hmat @ y).amplitudes

    y0 = dense_state(state).amplitudes
    sol = solve_ivp(rhs, (0.0, t), y0, method="DOP853", rtol=rtol, atol=rtol * 1e-2)
    if not sol.success:
        raise RuntimeError(f"dense TDVP flow failed: {sol.message}")
    return DenseState(tuple(dims), sol.y[:, -1])


def bond_residuals(state: MpsState, h: Mpo, energy: float | None = None) -> list[float]:
    """``||K(b) C(b) - E C(b)||`` for every internal bond of the normalized state.

    ``E`` defaults to the Rayleigh quotient of ``K(b)`` at each bond. At a
    variational fixed point every bond matrix is an eigenvector of ``K(b)``.
    """
    psi = canonicalize(state, "right")
    ts = list(psi.tensors)
    stack = EnvironmentStack(h, len(ts))
    build_blocks(stack, ts, 0, 1)
    out = []
    for n in range(len(ts) - 1):
        dl, d, dr = ts[n].shape
        q, c = qr_positive(ts[n].reshape(dl * d, dr), "left")
        ts[n] = q.reshape(dl, d, -1)
        stack.refresh(n, "left", ts[n])
        kc = stack.k0_matvec(n + 1, c)
        e = float(np.vdot(c, kc).real) if energy is None else energy
        out.append(float(np.linalg.norm(kc - e * c)))
        ts[n + 1] = np.tensordot(c, ts[n + 1], axes=(1, 0))
    return out
