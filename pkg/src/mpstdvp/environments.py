"""Left/right environment blocks and effective-operator matvecs.

Blocks are indexed by bond: ``left[b]`` contracts sites ``0..b-1`` and
``right[b]`` contracts sites ``b..N-1``; each has shape ``(D_b, M_b, D_b)``
with axes (bra, mpo, ket). ``left[0]`` and ``right[N]`` are the scalar
boundaries. ``left[b]`` is current for ``b <= left_cursor`` and ``right[b]``
for ``b >= right_cursor``.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import DimensionError, StalenessError
from .mpo import Mpo, _extend_left
from .mps import MpsState

_BOUNDARY = np.ones((1, 1, 1), dtype=np.complex128)


def _extend_right(env, a, w):
    # conj(A)[a, s, b] W[m, s, t, m'] env[b, m', b'] A[a', t, b'] -> [a, m, a']
    t = np.tensordot(a, env, axes=(2, 2))            # a' t b m'
    t = np.tensordot(w, t, axes=((2, 3), (1, 3)))    # m s a' b
    t = np.tensordot(a.conj(), t, axes=((1, 2), (1, 3)))  # a m a'
    return t


class EnvironmentStack:
    """Cached environment blocks bound to one MPO and one evolving state."""

    def __init__(self, h: Mpo, n_sites: int):
        if h.n_sites != n_sites:
            raise DimensionError(f"MPO has {h.n_sites} sites, state has {n_sites}")
        self.mpo = h
        self.n_sites = n_sites
        self.left: list[np.ndarray | None] = [None] * (n_sites + 1)
        self.right: list[np.ndarray | None] = [None] * (n_sites + 1)
        self.left[0] = _BOUNDARY
        self.right[n_sites] = _BOUNDARY
        self.left_cursor = 0
        self.right_cursor = n_sites

    def refresh(self, n: int, side: str, tensor: np.ndarray) -> None:
        """Extend the left block across site ``n`` (``side='left'``) or the right block.

        ``tensor`` must be the current left- (right-) orthonormal tensor at ``n``.
        Blocks that contained the previous tensor at ``n`` are marked stale.
        """
        w = self.mpo.tensors[n]
        if side == "left":
            if n > self.left_cursor:
                raise StalenessError(f"left block {n} is stale (cursor {self.left_cursor})")
            self.left[n + 1] = _extend_left(self.left[n], tensor, w)
            self.left_cursor = n + 1
            self.right_cursor = max(self.right_cursor, n + 1)
        elif side == "right":
            if n + 1 < self.right_cursor:
                raise StalenessError(f"right block {n + 1} is stale (cursor {self.right_cursor})")
            self.right[n] = _extend_right(self.right[n + 1], tensor, w)
            self.right_cursor = n
            self.left_cursor = min(self.left_cursor, n)
        else:
            raise ValueError(f"side must be 'left' or 'right', got {side!r}")

    def _left(self, b):
        if b > self.left_cursor:
            raise StalenessError(f"left block {b} is stale (cursor {self.left_cursor})")
        return self.left[b]

    def _right(self, b):
        if b < self.right_cursor:
            raise StalenessError(f"right block {b} is stale (cursor {self.right_cursor})")
        return self.right[b]

    def h1_matvec(self, n: int, x: np.ndarray) -> np.ndarray:
        """One-site effective Hamiltonian ``H(n)`` applied to ``x`` of shape ``(Dl, d, Dr)``."""
        le, re = self._left(n), self._right(n + 1)
        w = self.mpo.tensors[n]
        t = np.tensordot(le, x, axes=(2, 0))              # a m t b'
        t = np.tensordot(t, w, axes=((1, 2), (0, 2)))     # a b' s m'
        t = np.tensordot(t, re, axes=((1, 3), (2, 1)))    # a s b
        return t

    def k0_matvec(self, b: int, c: np.ndarray) -> np.ndarray:
        """Zero-site effective Hamiltonian ``K(b)`` applied to the bond matrix ``c``."""
        le, re = self._left(b), self._right(b)
        t = np.tensordot(le, c, axes=(2, 0))              # a m b'
        return np.tensordot(t, re, axes=((1, 2), (1, 2)))  # a b

    def h2_matvec(self, n: int, x: np.ndarray) -> np.ndarray:
        """Two-site effective Hamiltonian ``H(n:n+1)`` on ``x`` of shape ``(Dl, d, d, Dr)``."""
        if not 0 <= n < self.n_sites - 1:
            raise IndexError(f"two-site block at {n} out of range")
        le, re = self._left(n), self._right(n + 2)
        w1, w2 = self.mpo.tensors[n], self.mpo.tensors[n + 1]
        t = np.tensordot(le, x, axes=(2, 0))              # a m t1 t2 b'
        t = np.tensordot(t, w1, axes=((1, 2), (0, 2)))    # a t2 b' s1 m1
        t = np.tensordot(t, w2, axes=((4, 1), (0, 2)))    # a b' s1 s2 m2
        t = np.tensordot(t, re, axes=((1, 4), (2, 1)))    # a s1 s2 b
        return t

    def h1(self, n):
        return lambda x: self.h1_matvec(n, x)

    def k0(self, b):
        return lambda c: self.k0_matvec(b, c)

    def h2(self, n):
        return lambda x: self.h2_matvec(n, x)


def init_environments(state: MpsState, h: Mpo) -> EnvironmentStack:
    """Build every block that the state's gauge makes meaningful.

    For a site center ``c`` this is ``left[0..c]`` and ``right[c+1..N]``; for a
    bond center ``b`` it is ``left[0..b]`` and ``right[b..N]``.
    """
    if state.phys_dims != h.phys_dims:
        raise DimensionError("state and MPO local dimensions differ")
    stack = EnvironmentStack(h, state.n_sites)
    if state.center is not None:
        left_end, right_start = state.center, state.center + 1
    elif state.bond is not None:
        left_end, right_start = state.bond, state.bond
    else:
        raise ValueError("environments need a state in mixed-canonical form")
    build_blocks(stack, state.tensors, left_end, right_start)
    return stack


def build_blocks(stack: EnvironmentStack, tensors: Sequence[np.ndarray], left_end: int, right_start: int):
    for n in range(left_end):
        stack.refresh(n, "left", tensors[n])
    for n in range(stack.n_sites - 1, right_start - 1, -1):
        stack.refresh(n, "right", tensors[n])


def dense_effective_h1(stack: EnvironmentStack, n: int, shape) -> np.ndarray:
    """Materialize ``H(n)`` column by column (test mode only)."""
    return _densify(stack.h1(n), shape)


def dense_effective_k0(stack: EnvironmentStack, b: int, shape) -> np.ndarray:
    return _densify(stack.k0(b), shape)


def dense_effective_h2(stack: EnvironmentStack, n: int, shape) -> np.ndarray:
    return _densify(stack.h2(n), shape)


def _densify(op, shape):
    size = int(np.prod(shape))
    out = np.empty((size, size), dtype=np.complex128)
    for j in range(size):
        e = np.zeros(size, dtype=np.complex128)
        e[j] = 1.0
        out[:, j] = op(e.reshape(shape)).ravel()
    return out
