"""Dense matrix helpers and a Jacobi eigensolver for symmetric matrices.

Matrices are plain 2-D ``float64`` numpy arrays; :func:`as_matrix` is the
single gate that validates shape and finiteness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import ConvergenceError, InputError

SYMMETRY_RTOL = 1e-9


@dataclass(frozen=True)
class EigenDecomposition:
    """Ascending eigenvalues with unit eigenvectors stored as columns."""

    values: np.ndarray
    vectors: np.ndarray

    def __len__(self):
        return self.values.shape[0]


def as_matrix(a, name="matrix") -> np.ndarray:
    """Return ``a`` as a finite 2-D float64 array or raise InputError."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise InputError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        bad = np.argwhere(~np.isfinite(arr))[0]
        raise InputError(f"{name} has a non-finite entry at ({bad[0]}, {bad[1]})")
    return arr


def matmul(a, b) -> np.ndarray:
    """Matrix product with every entry summed in ascending inner index.

    Each output entry is accumulated exactly as the textbook triple loop
    would, so results are reproducible bit for bit regardless of the BLAS
    build or thread count.
    """
    a = as_matrix(a, "A")
    b = as_matrix(b, "B")
    if a.shape[1] != b.shape[0]:
        raise InputError(f"dimension mismatch: {a.shape} x {b.shape}")
    out = np.zeros((a.shape[0], b.shape[1]))
    term = np.empty_like(out)
    for k in range(a.shape[1]):
        np.multiply(a[:, k, None], b[None, k, :], out=term)
        out += term
    return out


@njit(cache=True, nogil=True)
def _off_norm(a):
    m = a.shape[0]
    total = 0.0
    for i in range(m):
        for j in range(m):
            if i != j:
                total += a[i, j] * a[i, j]
    return math.sqrt(total)


@njit(cache=True, nogil=True)
def _jacobi_sweeps(a, vecs_t, target, max_sweeps):
    """Row-cyclic Jacobi sweeps in place; returns sweeps used or -1.

    Eigenvectors accumulate in the rows of ``vecs_t`` for contiguous access.
    """
    m = a.shape[0]
    for sweep in range(max_sweeps + 1):
        if _off_norm(a) <= target:
            return sweep
        if sweep == max_sweeps:
            return -1
        for p in range(m - 1):
            for q in range(p + 1, m):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                app = a[p, p]
                aqq = a[q, q]
                tau = (aqq - app) / (2.0 * apq)
                sgn = 1.0 if tau >= 0.0 else -1.0
                t = sgn / (abs(tau) + math.hypot(1.0, tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                for k in range(m):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(m):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - s * aqk
                    a[q, k] = s * apk + c * aqk
                a[p, p] = app - t * apq
                a[q, q] = aqq + t * apq
                a[p, q] = 0.0
                a[q, p] = 0.0
                for k in range(m):
                    vpk = vecs_t[p, k]
                    vqk = vecs_t[q, k]
                    vecs_t[p, k] = c * vpk - s * vqk
                    vecs_t[q, k] = s * vpk + c * vqk
    return -1


def canonicalize_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip columns so the largest-magnitude entry (first on ties) is positive."""
    vectors = vectors.copy()
    if vectors.size == 0:
        return vectors
    idx = np.argmax(np.abs(vectors), axis=0)
    lead = vectors[idx, np.arange(vectors.shape[1])]
    vectors[:, lead < 0] *= -1.0
    return vectors


def eigh_symmetric(a, tol: float = 1e-12, max_sweeps: int = 100) -> EigenDecomposition:
    """Eigendecomposition of a real symmetric matrix by cyclic Jacobi rotations.

    Each sweep visits every off-diagonal pair (p, q), p < q, in row order.
    Iteration stops once the off-diagonal Frobenius norm drops to
    ``tol * ||A||_F``; ``max_sweeps`` sweeps without getting there raise
    ConvergenceError.

    Returns eigenvalues in ascending order; each eigenvector column is
    sign-canonicalized (its largest-magnitude entry is positive).
    """
    a = as_matrix(a, "A")
    m, n = a.shape
    if m != n:
        raise InputError(f"matrix must be square, got {a.shape}")
    norm = float(np.sqrt(np.sum(a * a)))
    if np.max(np.abs(a - a.T), initial=0.0) > SYMMETRY_RTOL * norm:
        raise InputError("matrix is not symmetric")

    work = 0.5 * (a + a.T)
    if norm == 0.0 or m == 1:
        return EigenDecomposition(np.diag(work).copy(), np.eye(m))

    vecs_t = np.eye(m)
    used = _jacobi_sweeps(work, vecs_t, tol * norm, max_sweeps)
    if used < 0:
        raise ConvergenceError(
            f"Jacobi eigensolver did not converge within {max_sweeps} sweeps"
        )

    values = np.diag(work).copy()
    order = np.argsort(values, kind="stable")
    return EigenDecomposition(values[order], canonicalize_signs(vecs_t.T[:, order]))
