"""Finite matrix product states with open boundaries.

Sites are indexed ``0..N-1`` and bonds ``0..N``; bond ``b`` sits between sites
``b-1`` and ``b``, so bonds ``0`` and ``N`` are the trivial boundary bonds of
dimension one. Site tensors have shape ``(D_left, d, D_right)``.

An :class:`MpsState` is immutable. Every operation returns a new state. The
gauge annotation records how the tensors were prepared:

* ``center=n`` (site gauge): sites ``< n`` are left-orthonormal, sites ``> n``
  right-orthonormal, and site ``n`` holds the center block ``A_C(n)``.
  ``center=0`` is the right-canonical form, ``center=N-1`` the left-canonical one.
* ``bond=b`` (bond gauge): sites ``< b`` are left-orthonormal, sites ``>= b``
  right-orthonormal, and the bond matrix ``C(b)`` is stored separately.
* neither: no structure is assumed.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionError, InvalidGaugeError, InvalidInputError
from .tensor_core import as_tensor, contract, qr_positive

__all__ = [
    "MpsState",
    "local_profile",
    "SchmidtSpectrum",
    "product_mps",
    "random_mps",
    "gauge_transform",
    "canonicalize",
    "move_center",
    "schmidt_spectrum",
    "density_matrices",
    "overlap",
    "norm",
    "local_expectation",
    "entanglement_entropy",
    "apply_local",
    "dumps_state",
    "loads_state",
]

GAUGE_TOL = 1e-10


class MpsState:
    """Immutable MPS value. See the module docstring for the gauge annotation."""

    __slots__ = ("_tensors", "_center", "_bond", "_bond_matrix")

    def __init__(self, tensors: Sequence[np.ndarray], center: int | None = None,
                 bond: int | None = None, bond_matrix: np.ndarray | None = None):
        tensors = tuple(as_tensor(t, copy=True) for t in tensors)
        if not tensors:
            raise DimensionError("an MPS needs at least one site")
        for n, t in enumerate(tensors):
            if t.ndim != 3:
                raise DimensionError(f"site {n}: expected rank-3 tensor, got shape {t.shape}")
            if n > 0 and tensors[n - 1].shape[2] != t.shape[0]:
                raise DimensionError(
                    f"bond {n}: right extent {tensors[n - 1].shape[2]} of site {n - 1} "
                    f"!= left extent {t.shape[0]} of site {n}"
                )
        if tensors[0].shape[0] != 1 or tensors[-1].shape[2] != 1:
            raise DimensionError("boundary bond dimensions must be 1")
        if center is not None and bond is not None:
            raise ValueError("a state has either a site center or a bond center, not both")
        if center is not None and not 0 <= center < len(tensors):
            raise IndexError(f"center site {center} out of range")
        if bond is not None:
            if not 0 <= bond <= len(tensors):
                raise IndexError(f"center bond {bond} out of range")
            if bond_matrix is None:
                raise ValueError("bond gauge requires the bond matrix")
            bond_matrix = as_tensor(bond_matrix, copy=True)
            dl = tensors[bond - 1].shape[2] if bond > 0 else 1
            dr = tensors[bond].shape[0] if bond < len(tensors) else 1
            if bond_matrix.shape != (dl, dr):
                raise DimensionError(f"bond matrix shape {bond_matrix.shape} != ({dl}, {dr})")
            bond_matrix.flags.writeable = False
        elif bond_matrix is not None:
            raise ValueError("bond_matrix given without bond index")
        for t in tensors:
            t.flags.writeable = False
        self._tensors = tensors
        self._center = center
        self._bond = bond
        self._bond_matrix = bond_matrix

    @property
    def tensors(self) -> tuple[np.ndarray, ...]:
        return self._tensors

    @property
    def n_sites(self) -> int:
        return len(self._tensors)

    @property
    def center(self) -> int | None:
        return self._center

    @property
    def bond(self) -> int | None:
        return self._bond

    @property
    def bond_matrix(self) -> np.ndarray | None:
        return self._bond_matrix

    @property
    def phys_dims(self) -> list[int]:
        return [t.shape[1] for t in self._tensors]

    @property
    def bond_dims(self) -> list[int]:
        """Bond dimensions ``D_0..D_N`` (both boundaries included)."""
        return [1] + [t.shape[2] for t in self._tensors]

    @property
    def gauge(self) -> str:
        if self._bond is not None:
            return f"bond:{self._bond}"
        if self._center is not None:
            return f"site:{self._center}"
        return "none"

    def site_tensors(self) -> list[np.ndarray]:
        """Site tensors with any separate bond matrix absorbed."""
        ts = list(self._tensors)
        if self._bond is None:
            return ts
        b, c = self._bond, self._bond_matrix
        if b < self.n_sites:
            ts[b] = contract(c, ts[b], [(1, 0)])
        else:
            ts[b - 1] = contract(ts[b - 1], c, [(2, 0)])
        return ts

    def with_tensors(self, tensors, center=None, bond=None, bond_matrix=None) -> "MpsState":
        return MpsState(tensors, center=center, bond=bond, bond_matrix=bond_matrix)

    def verify_gauge(self, tol: float = GAUGE_TOL) -> bool:
        """Audit the annotated orthonormality conditions in ``O(N D^3 d)``."""
        if self._center is not None:
            split, skip = self._center, self._center
        elif self._bond is not None:
            split, skip = self._bond, None
        else:
            return True
        for n, a in enumerate(self._tensors):
            if n == skip:
                continue
            if n < split:
                m = a.reshape(-1, a.shape[2])
                gram = m.conj().T @ m
            else:
                m = a.reshape(a.shape[0], -1)
                gram = m @ m.conj().T
            if np.max(np.abs(gram - np.eye(gram.shape[0])), initial=0.0) > tol:
                return False
        return True

    def __repr__(self):
        return f"MpsState(N={self.n_sites}, D={self.bond_dims}, gauge={self.gauge})"


@dataclass(frozen=True)
class SchmidtSpectrum:
    bond: int
    values: np.ndarray


def is_left_orthonormal(a: np.ndarray, tol: float = GAUGE_TOL) -> bool:
    m = a.reshape(-1, a.shape[2])
    return np.allclose(m.conj().T @ m, np.eye(m.shape[1]), atol=tol, rtol=0)


def is_right_orthonormal(a: np.ndarray, tol: float = GAUGE_TOL) -> bool:
    m = a.reshape(a.shape[0], -1)
    return np.allclose(m @ m.conj().T, np.eye(m.shape[0]), atol=tol, rtol=0)


def product_mps(local_states: Sequence[Sequence[complex]]) -> MpsState:
    """Bond-dimension-one MPS from a list of local state vectors (normalized per site)."""
    tensors = []
    for n, v in enumerate(local_states):
        v = np.asarray(v, dtype=np.complex128).ravel()
        nv = np.linalg.norm(v)
        if nv == 0:
            raise InvalidInputError(f"local state at site {n} is zero")
        tensors.append((v / nv).reshape(1, -1, 1))
    return MpsState(tensors, center=0)


def max_bond_dims(phys_dims: Sequence[int], d_max: int | None = None) -> list[int]:
    """Entanglement-maximal bond dimensions, optionally capped by ``d_max``."""
    n_sites = len(phys_dims)
    dims = []
    for b in range(n_sites + 1):
        left = int(np.prod(phys_dims[:b], dtype=object))
        right = int(np.prod(phys_dims[b:], dtype=object))
        dim = min(left, right)
        if d_max is not None:
            dim = min(dim, d_max)
        dims.append(dim)
    return dims


def random_mps(n_sites: int, d: int, bond_dim: int, seed=None) -> MpsState:
    """Random complex Gaussian MPS, normalized and right-canonical (center at site 0)."""
    if n_sites < 1 or d < 2 or bond_dim < 1:
        raise ValueError("need n_sites >= 1, d >= 2, bond_dim >= 1")
    rng = np.random.default_rng(seed)
    dims = max_bond_dims([d] * n_sites, bond_dim)
    tensors = []
    for n in range(n_sites):
        shape = (dims[n], d, dims[n + 1])
        tensors.append(rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    return canonicalize(MpsState(tensors), "right")


def gauge_transform(state: MpsState, gauges: Sequence[np.ndarray]) -> MpsState:
    """Apply ``A(n) -> G(n-1)^{-1} A(n) G(n)`` with one gauge matrix per bond ``0..N``.

    The inverse is applied via a linear solve; a numerically singular ``G``
    raises :class:`InvalidGaugeError`. The result carries no gauge annotation.
    """
    n_sites = state.n_sites
    if len(gauges) != n_sites + 1:
        raise DimensionError(f"need {n_sites + 1} gauge matrices, got {len(gauges)}")
    gauges = [np.atleast_2d(np.asarray(g, dtype=np.complex128)) for g in gauges]
    for b in (0, n_sites):
        if gauges[b].shape != (1, 1) or not np.isclose(gauges[b][0, 0], 1.0):
            raise InvalidGaugeError(f"boundary gauge at bond {b} must be the scalar 1")
    dims = state.bond_dims
    for b, g in enumerate(gauges):
        if g.shape != (dims[b], dims[b]):
            raise DimensionError(f"gauge at bond {b} has shape {g.shape}, expected {(dims[b],) * 2}")
        if np.linalg.cond(g) > 1e13:
            raise InvalidGaugeError(f"gauge matrix at bond {b} is singular")
    tensors = []
    for n, a in enumerate(state.site_tensors()):
        dl, d, dr = a.shape
        right = contract(a, gauges[n + 1], [(2, 0)])
        left = np.linalg.solve(gauges[n], right.reshape(dl, d * dr))
        tensors.append(left.reshape(dl, d, dr))
    return MpsState(tensors)


def _left_sweep(tensors: list[np.ndarray], start: int, stop: int, carry: np.ndarray | None = None):
    """Left-orthonormalize sites ``start..stop-1`` in place; returns the carried ``C``."""
    for n in range(start, stop):
        a = tensors[n] if carry is None else contract(carry, tensors[n], [(1, 0)])
        dl, d, _ = a.shape
        q, r = qr_positive(a.reshape(dl * d, -1), "left")
        tensors[n] = q.reshape(dl, d, -1)
        carry = r
    return carry


def _right_sweep(tensors: list[np.ndarray], start: int, stop: int, carry: np.ndarray | None = None):
    """Right-orthonormalize sites ``start..stop+1`` (descending) in place; returns ``C``."""
    for n in range(start, stop, -1):
        a = tensors[n] if carry is None else contract(tensors[n], carry, [(2, 0)])
        _, d, dr = a.shape
        q, l = qr_positive(a.reshape(-1, d * dr), "right")
        tensors[n] = q.reshape(-1, d, dr)
        carry = l
    return carry


def canonicalize(state: MpsState, target="right") -> MpsState:
    """Bring ``state`` into a canonical form by QR sweeps and normalize it.

    ``target`` is ``'left'``, ``'right'``, a site index (mixed form with that
    center site) or ``('bond', b)`` (bond gauge exposing ``C(b)``). No matrix is
    ever inverted. The leftover scalar, the norm, is divided out.
    """
    tensors = state.site_tensors()
    n_sites = len(tensors)
    if target == "left":
        site, bond = n_sites - 1, None
    elif target == "right":
        site, bond = 0, None
    elif isinstance(target, tuple) and len(target) == 2 and target[0] == "bond":
        site, bond = None, int(target[1])
        if not 0 <= bond <= n_sites:
            raise IndexError(f"bond {bond} out of range")
    else:
        site, bond = int(target), None
        if not 0 <= site < n_sites:
            raise IndexError(f"site {site} out of range")

    if bond is not None:
        c_left = _left_sweep(tensors, 0, bond)
        c_right = _right_sweep(tensors, n_sites - 1, bond - 1)
        if c_left is None:
            c = c_right
        elif c_right is None:
            c = c_left
        else:
            c = c_left @ c_right
        nrm = np.linalg.norm(c)
        if nrm == 0:
            raise InvalidInputError("cannot canonicalize a zero-norm state")
        return MpsState(tensors, bond=bond, bond_matrix=c / nrm)

    c_left = _left_sweep(tensors, 0, site)
    c_right = _right_sweep(tensors, n_sites - 1, site)
    a = tensors[site]
    if c_left is not None:
        a = contract(c_left, a, [(1, 0)])
    if c_right is not None:
        a = contract(a, c_right, [(2, 0)])
    nrm = np.linalg.norm(a)
    if nrm == 0:
        raise InvalidInputError("cannot canonicalize a zero-norm state")
    tensors[site] = a / nrm
    return MpsState(tensors, center=site)


def move_center(state: MpsState, to: int, *, bond: bool = False) -> MpsState:
    """Shift the orthogonality center by one position with a single QR/LQ.

    With ``bond=False`` the center moves to the adjacent site ``to``; with
    ``bond=True`` the center block is split and ``C(to)`` is exposed on bond
    ``to``, which must be one of the two bonds touching the center site. A
    state in bond gauge can move to either adjacent site.
    """
    n_sites = state.n_sites
    tensors = list(state.tensors)
    if state.bond is not None:
        b = state.bond
        if bond or to not in (b - 1, b) or not 0 <= to < n_sites:
            raise IndexError(f"from bond {b} the center can only move to site {b - 1} or {b}")
        c = state.bond_matrix
        if to == b:
            tensors[to] = contract(c, tensors[to], [(1, 0)])
        else:
            tensors[to] = contract(tensors[to], c, [(2, 0)])
        return MpsState(tensors, center=to)
    n = state.center
    if n is None:
        raise InvalidGaugeError("move_center needs a state in mixed-canonical form")
    a = tensors[n]
    dl, d, dr = a.shape
    if bond:
        if to == n + 1:
            q, r = qr_positive(a.reshape(dl * d, dr), "left")
            tensors[n] = q.reshape(dl, d, -1)
            return MpsState(tensors, bond=to, bond_matrix=r)
        if to == n:
            q, l = qr_positive(a.reshape(dl, d * dr), "right")
            tensors[n] = q.reshape(-1, d, dr)
            return MpsState(tensors, bond=to, bond_matrix=l)
        raise IndexError(f"bond {to} is not adjacent to center site {n}")
    if to == n + 1 and to < n_sites:
        q, r = qr_positive(a.reshape(dl * d, dr), "left")
        tensors[n] = q.reshape(dl, d, -1)
        tensors[to] = contract(r, tensors[to], [(1, 0)])
        return MpsState(tensors, center=to)
    if to == n - 1 and to >= 0:
        q, l = qr_positive(a.reshape(dl, d * dr), "right")
        tensors[n] = q.reshape(-1, d, dr)
        tensors[to] = contract(tensors[to], l, [(2, 0)])
        return MpsState(tensors, center=to)
    raise IndexError(f"cannot move center from site {n} to site {to}")


def shift_center(state: MpsState, site: int) -> MpsState:
    """Move the center to ``site`` by repeated single-step moves (canonicalizing if needed)."""
    if state.bond is not None:
        b = state.bond
        state = move_center(state, b if b < state.n_sites else b - 1)
    if state.center is None:
        return canonicalize(state, site)
    while state.center < site:
        state = move_center(state, state.center + 1)
    while state.center > site:
        state = move_center(state, state.center - 1)
    return state


def bond_matrix_at(state: MpsState, bond: int) -> np.ndarray:
    """The bond matrix ``C(bond)`` of the normalized state in mixed-canonical form."""
    if state.bond == bond:
        c = state.bond_matrix
    else:
        c = canonicalize(state, ("bond", bond)).bond_matrix
    return c / np.linalg.norm(c)


def schmidt_spectrum(state: MpsState, bond: int) -> SchmidtSpectrum:
    if not 0 <= bond <= state.n_sites:
        raise IndexError(f"bond {bond} out of range")
    s = np.linalg.svd(bond_matrix_at(state, bond), compute_uv=False)
    return SchmidtSpectrum(bond, s)


def density_matrices(state: MpsState) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Left and right transfer density matrices ``l(0..N)`` and ``r(0..N)``.

    ``l(0) = r(N) = 1`` and ``r(0) = l(N)`` is the squared norm.
    """
    tensors = state.site_tensors()
    n_sites = len(tensors)
    left = [np.ones((1, 1), dtype=np.complex128)]
    for a in tensors:
        # l(n) = sum_s A^s(n)^H l(n-1) A^s(n)
        t = contract(left[-1], a, [(1, 0)])
        left.append(contract(a.conj(), t, [(0, 0), (1, 1)]))
    right = [np.ones((1, 1), dtype=np.complex128)]
    for a in reversed(tensors):
        # r(n-1) = sum_s A^s(n) r(n) A^s(n)^H
        t = contract(a, right[-1], [(2, 0)])
        right.append(contract(t, a.conj(), [(1, 1), (2, 2)]))
    right.reverse()
    assert len(left) == len(right) == n_sites + 1
    return left, right


def _check_compatible(a: MpsState, b: MpsState):
    if a.n_sites != b.n_sites or a.phys_dims != b.phys_dims:
        raise DimensionError(
            f"incompatible states: N={a.n_sites}/{b.n_sites}, d={a.phys_dims}/{b.phys_dims}"
        )


def overlap(a: MpsState, b: MpsState) -> complex:
    """``<a|b>`` by a left-to-right transfer contraction."""
    _check_compatible(a, b)
    env = np.ones((1, 1), dtype=np.complex128)
    for ta, tb in zip(a.site_tensors(), b.site_tensors()):
        t = contract(env, tb, [(1, 0)])
        env = contract(ta.conj(), t, [(0, 0), (1, 1)])
    return complex(env[0, 0])


def norm(state: MpsState) -> float:
    return float(np.sqrt(max(overlap(state, state).real, 0.0)))


def local_expectation(state: MpsState, op: np.ndarray, site: int) -> complex:
    """``<op>`` at ``site`` evaluated on the center block after moving the center there.

    The value is divided by the squared norm of the center block, so it is the
    normalized expectation value.
    """
    if not 0 <= site < state.n_sites:
        raise IndexError(f"site {site} out of range")
    op = np.asarray(op, dtype=np.complex128)
    d = state.phys_dims[site]
    if op.shape != (d, d):
        raise DimensionError(f"operator shape {op.shape} does not match local dimension {d}")
    ac = shift_center(state, site).tensors[site]
    num = np.vdot(ac, contract(op, ac, [(1, 1)]).transpose(1, 0, 2))
    return complex(num / np.vdot(ac, ac))


def local_profile(state: MpsState, op: np.ndarray) -> np.ndarray:
    """Normalized ``<op>`` on every site, sweeping the center once from left to right."""
    op = np.asarray(op, dtype=np.complex128)
    state = shift_center(state, 0)
    out = np.empty(state.n_sites, dtype=np.complex128)
    for n in range(state.n_sites):
        if n > 0:
            state = move_center(state, n)
        ac = state.tensors[n]
        out[n] = np.vdot(ac, contract(op, ac, [(1, 1)]).transpose(1, 0, 2)) / np.vdot(ac, ac)
    return out


def entanglement_entropy(state: MpsState, bond: int) -> float:
    """Von Neumann entropy (natural log) across ``bond``."""
    p = schmidt_spectrum(state, bond).values ** 2
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def apply_local(state: MpsState, op: np.ndarray, site: int) -> MpsState:
    """Apply a one-site operator. Unitary operators preserve a center at ``site``."""
    tensors = state.site_tensors()
    op = np.asarray(op, dtype=np.complex128)
    tensors[site] = contract(op, tensors[site], [(1, 1)]).transpose(1, 0, 2)
    center = state.center if state.center == site else None
    return MpsState(tensors, center=center)


def audit_rank(state: MpsState, rtol: float = 1e-12) -> list[int]:
    """Bonds whose Schmidt spectrum has (numerically) zero values; warns if any."""
    bad = []
    for b in range(1, state.n_sites):
        s = schmidt_spectrum(state, b).values
        if s[-1] <= rtol * s[0]:
            bad.append(b)
    if bad:
        warnings.warn(f"rank-deficient bonds {bad}: state sits at a singular manifold point",
                      RuntimeWarning, stacklevel=2)
    return bad


# -- checkpoint files -------------------------------------------------------

def dumps_state(state: MpsState) -> str:
    from .tensor_core import dumps_tensor

    lines = [
        "mps",
        f"N: {state.n_sites}",
        "d: " + " ".join(map(str, state.phys_dims)),
        "D: " + " ".join(map(str, state.bond_dims)),
        f"gauge: {state.gauge}",
    ]
    out = "\n".join(lines) + "\n"
    for t in state.tensors:
        out += dumps_tensor(t)
    if state.bond is not None:
        out += dumps_tensor(state.bond_matrix)
    return out


def loads_state(text: str) -> MpsState:
    from .tensor_core import read_tensor

    lines = text.splitlines()
    if not lines or lines[0].strip() != "mps":
        raise DimensionError("line 1: not an MPS checkpoint")
    fields = {}
    for i in range(1, 5):
        key, _, value = lines[i].partition(":")
        fields[key.strip()] = value.strip()
    n_sites = int(fields["N"])
    pos = 5
    tensors = []
    for _ in range(n_sites):
        t, pos = read_tensor(lines, pos)
        tensors.append(t)
    state_d = [t.shape[1] for t in tensors]
    if state_d != [int(x) for x in fields["d"].split()]:
        raise DimensionError("checkpoint header d list does not match the tensors")
    gauge = fields["gauge"]
    if gauge.startswith("site:"):
        return MpsState(tensors, center=int(gauge[5:]))
    if gauge.startswith("bond:"):
        c, pos = read_tensor(lines, pos)
        return MpsState(tensors, bond=int(gauge[5:]), bond_matrix=c)
    return MpsState(tensors)
