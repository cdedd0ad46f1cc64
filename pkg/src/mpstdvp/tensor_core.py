"""Dense tensor algebra used by every other module.

Tensors are plain ``numpy.ndarray`` objects of dtype ``complex128`` stored in
row-major (C) order; the last axis varies fastest. Axis conventions used
throughout the package:

* MPS site tensor ``A[left, phys, right]``
* MPO site tensor ``W[left, phys_out, phys_in, right]``
* environment block ``E[bra, mpo, ket]``
"""

from __future__ import annotations

from typing import NamedTuple, Sequence

import numpy as np

from .errors import DimensionError, FactorizationError

__all__ = [
    "as_tensor",
    "contract",
    "qr_positive",
    "svd_truncate",
    "TruncatedSvd",
    "dumps_tensor",
    "loads_tensor",
    "write_tensor",
    "read_tensor",
]


def as_tensor(data, copy: bool = False) -> np.ndarray:
    """Return ``data`` as a C-contiguous complex128 array, rejecting NaN/Inf."""
    t = np.array(data, dtype=np.complex128, order="C", copy=True if copy else None)
    if not np.all(np.isfinite(t)):
        raise DimensionError("tensor contains non-finite entries")
    return t


def contract(a: np.ndarray, b: np.ndarray, pairs: Sequence[tuple[int, int]]) -> np.ndarray:
    """Contract ``a`` and ``b`` over the listed ``(axis_of_a, axis_of_b)`` pairs.

    The free axes of ``a`` come first (in their original order), followed by the
    free axes of ``b``. An empty ``pairs`` gives the outer product.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    axes_a = [p[0] for p in pairs]
    axes_b = [p[1] for p in pairs]
    for ia, ib in pairs:
        if not (-a.ndim <= ia < a.ndim) or not (-b.ndim <= ib < b.ndim):
            raise DimensionError(f"axis pair ({ia}, {ib}) out of range for ranks {a.ndim}, {b.ndim}")
        if a.shape[ia] != b.shape[ib]:
            raise DimensionError(
                f"cannot contract axis {ia} of extent {a.shape[ia]} "
                f"with axis {ib} of extent {b.shape[ib]}"
            )
    if len(set(np.mod(axes_a, a.ndim))) != len(axes_a) or len(set(np.mod(axes_b, b.ndim))) != len(axes_b):
        raise DimensionError("an axis appears in more than one contraction pair")
    return np.tensordot(a, b, axes=(axes_a, axes_b))


def _check_matrix(m) -> np.ndarray:
    m = np.asarray(m)
    if m.ndim != 2:
        raise DimensionError(f"expected a matrix, got rank {m.ndim}")
    if m.shape[0] < 1 or m.shape[1] < 1:
        raise DimensionError(f"empty matrix of shape {m.shape}")
    return m


def qr_positive(m: np.ndarray, side: str = "left") -> tuple[np.ndarray, np.ndarray]:
    """QR (``side='left'``) or LQ (``side='right'``) with non-negative real diagonal.

    ``side='left'`` returns ``(Q, R)`` with ``m = Q @ R``, ``Q^H Q = 1`` and ``R``
    upper triangular. ``side='right'`` returns ``(Q, L)`` with ``m = L @ Q``,
    ``Q Q^H = 1`` and ``L`` lower triangular. Both use the reduced factorization,
    so the inner dimension is ``min(r, c)``.
    """
    m = _check_matrix(m).astype(np.complex128, copy=False)
    if side == "left":
        q, r = _qr_fixed(m)
        return q, r
    if side == "right":
        q, r = _qr_fixed(m.conj().T)
        return q.conj().T, r.conj().T
    raise ValueError(f"side must be 'left' or 'right', got {side!r}")


def _qr_fixed(m):
    try:
        q, r = np.linalg.qr(m, mode="reduced")
    except np.linalg.LinAlgError as exc:
        raise FactorizationError(str(exc)) from exc
    diag = np.diagonal(r)
    phase = np.ones_like(diag)
    nz = np.abs(diag) > 0
    phase[nz] = diag[nz] / np.abs(diag[nz])
    q = q * phase[np.newaxis, :]
    r = phase.conj()[:, np.newaxis] * r
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(r))):
        raise FactorizationError("QR produced non-finite factors")
    return q, r


class TruncatedSvd(NamedTuple):
    u: np.ndarray
    s: np.ndarray
    vh: np.ndarray
    discarded_weight: float


def svd_truncate(m: np.ndarray, epsilon: float = 0.0, d_max: int | None = None) -> TruncatedSvd:
    """Thin SVD keeping the singular values that are not below ``epsilon * ||s||_2``.

    At most ``d_max`` values are kept and never fewer than one. The discarded
    weight is the sum of squares of the dropped singular values, which equals
    the squared Frobenius error of the truncated reconstruction.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    if d_max is not None and d_max < 1:
        raise ValueError("d_max must be positive")
    m = _check_matrix(m)
    try:
        u, s, vh = np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError:
        # gesdd occasionally fails to converge; gesvd is slower but robust
        import scipy.linalg

        try:
            u, s, vh = scipy.linalg.svd(m, full_matrices=False, lapack_driver="gesvd")
        except np.linalg.LinAlgError as exc:
            raise FactorizationError(str(exc)) from exc
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(s)) and np.all(np.isfinite(vh))):
        raise FactorizationError("SVD produced non-finite factors")
    threshold = epsilon * np.linalg.norm(s)
    k = int(np.count_nonzero(s >= threshold)) if epsilon > 0 else s.size
    k = max(k, 1)
    if d_max is not None:
        k = min(k, d_max)
    discarded = float(np.sum(s[k:] ** 2))
    return TruncatedSvd(u[:, :k], s[:k], vh[:k, :], discarded)


def dumps_tensor(t: np.ndarray) -> str:
    """Text dump: ``shape: e1 e2 ...`` then one ``re im`` line per entry (row-major)."""
    t = np.asarray(t, dtype=np.complex128)
    lines = ["shape: " + " ".join(str(e) for e in t.shape)]
    lines.extend(f"{float(z.real)!r} {float(z.imag)!r}" for z in t.ravel(order="C"))
    return "\n".join(lines) + "\n"


def loads_tensor(text: str) -> np.ndarray:
    lines = text.splitlines()
    t, rest = _parse_tensor(lines, 0)
    if any(line.strip() for line in lines[rest:]):
        raise DimensionError("trailing data after tensor dump")
    return t


def write_tensor(fh, t: np.ndarray) -> None:
    fh.write(dumps_tensor(t))


def read_tensor(lines: list[str], start: int = 0) -> tuple[np.ndarray, int]:
    """Parse one tensor dump from ``lines[start:]``; returns the tensor and next line index."""
    return _parse_tensor(lines, start)


def _parse_tensor(lines, start):
    header = lines[start].strip()
    if not header.startswith("shape:"):
        raise DimensionError(f"line {start + 1}: expected 'shape:' header, got {header!r}")
    shape = tuple(int(tok) for tok in header[len("shape:"):].split())
    size = int(np.prod(shape, dtype=np.int64))
    body = lines[start + 1:start + 1 + size]
    if len(body) != size:
        raise DimensionError(f"tensor dump truncated: expected {size} entries, found {len(body)}")
    values = np.empty(size, dtype=np.complex128)
    for i, line in enumerate(body):
        re, im = line.split()
        values[i] = complex(float(re), float(im))
    return values.reshape(shape), start + 1 + size
