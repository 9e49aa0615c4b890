"""Angle-based training sample filtering.

Samples are compared against their projection onto the eigenvectors of
``D = L L^T`` with the smallest eigenvalues, where ``L`` is the pairwise
Manhattan distance matrix of the training rows.  A small angle means the
sample conforms to the dominant low-energy structure; large angles are
treated as noise and dropped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .linalg import as_matrix, eigh_symmetric, matmul

ORTHONORMAL_TOL = 1e-8
DEFAULT_KEEP_FRACTION = 0.75


@dataclass(frozen=True)
class FilterConfig:
    """How many eigenvectors to project on and how many samples to keep.

    Exactly one of ``count``, ``fraction`` or ``max_degree`` may be given;
    with none of them the fraction defaults to 0.75.
    """

    t: int = 1
    count: int | None = None
    fraction: float | None = None
    max_degree: float | None = None

    def __post_init__(self):
        given = [k for k in ("count", "fraction", "max_degree") if getattr(self, k) is not None]
        if len(given) > 1:
            raise InputError(f"specify only one of count/fraction/max_degree, got {given}")
        if not given:
            object.__setattr__(self, "fraction", DEFAULT_KEEP_FRACTION)
        if self.t < 1:
            raise InputError(f"t must be >= 1, got {self.t}")
        if self.fraction is not None and not 0.0 < self.fraction <= 1.0:
            raise InputError(f"keep fraction must lie in (0, 1], got {self.fraction}")

    def resolve_q(self, degrees) -> int:
        degrees = np.asarray(degrees, dtype=float)
        m = degrees.shape[0]
        if self.count is not None:
            q = int(self.count)
        elif self.fraction is not None:
            # round half up so 0.75 * 280 -> 210 and 0.8 * 200 -> 160
            q = int(math.floor(self.fraction * m + 0.5))
        else:
            q = int(np.count_nonzero(degrees <= self.max_degree))
        if q < 1:
            raise InputError(f"resolved q = {q}; nothing would be kept")
        if q > m:
            raise InputError(f"resolved q = {q} exceeds the number of samples m = {m}")
        return q


@dataclass(frozen=True)
class FilterReport:
    """Per-sample angles (degrees) and the resulting selection, 0-based."""

    degrees: np.ndarray
    order: np.ndarray
    selected: np.ndarray
    eigenvalues_used: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def q(self) -> int:
        return int(self.selected.shape[0])


def manhattan_distance_matrix(x) -> np.ndarray:
    """Pairwise L1 distances between the rows of ``x``."""
    x = as_matrix(x, "X")
    m = x.shape[0]
    if m < 2:
        raise InputError(f"need at least 2 samples to filter, got {m}")
    dist = np.zeros((m, m))
    for i in range(m - 1):
        d = np.sum(np.abs(x[i + 1:] - x[i]), axis=1)
        dist[i, i + 1:] = d
        dist[i + 1:, i] = d
    return dist


def smallest_eigenpairs(dist, t: int = 1):
    """The ``t`` smallest eigenvalues of ``dist @ dist.T`` and their eigenvectors.

    ``dist`` is symmetric, so ``D = dist^2`` shares its eigenvectors and has
    eigenvalues ``mu^2``.  D is never formed.  Ties in ``mu^2`` are broken by
    signed ``mu`` and then by the canonical eigenvector, lexicographically.
    """
    dist = as_matrix(dist, "L")
    m = dist.shape[0]
    if not 1 <= t <= m:
        raise InputError(f"t must lie in [1, {m}], got {t}")
    eig = eigh_symmetric(dist)
    mu = eig.values
    keys = sorted(
        range(m),
        key=lambda j: (mu[j] * mu[j], mu[j], tuple(eig.vectors[:, j])),
    )[:t]
    return mu[keys] ** 2, eig.vectors[:, keys]


def smallest_eigenvectors(dist, t: int = 1) -> np.ndarray:
    return smallest_eigenpairs(dist, t)[1]


def project_onto_subspace(x, basis) -> np.ndarray:
    """Project the rows-as-samples matrix onto span(basis): ``V (V^T X)``."""
    x = as_matrix(x, "X")
    basis = as_matrix(basis, "V")
    if basis.shape[0] != x.shape[0]:
        raise InputError(f"basis has {basis.shape[0]} rows, X has {x.shape[0]}")
    gram = matmul(basis.T, basis)
    if np.max(np.abs(gram - np.eye(basis.shape[1]))) > ORTHONORMAL_TOL:
        raise InputError("basis columns are not orthonormal")
    return matmul(basis, matmul(basis.T, x))


def sample_degrees(x, xbar) -> np.ndarray:
    """Angle in degrees between each row of ``x`` and the same row of ``xbar``.

    A row whose projection vanishes gets 180 degrees.  The angle is
    ``arccos`` of the cosine similarity, evaluated as
    ``2 atan2(|u - v|, |u + v|)`` on the unit vectors so that nearly
    parallel or antiparallel rows do not lose precision.
    """
    x = as_matrix(x, "X")
    xbar = as_matrix(xbar, "Xbar")
    if x.shape != xbar.shape:
        raise InputError(f"shape mismatch: {x.shape} vs {xbar.shape}")
    nx = np.sqrt(np.sum(x * x, axis=1))
    zero = np.flatnonzero(nx == 0.0)
    if zero.size:
        raise InputError(f"sample row {zero[0]} is all zeros; its angle is undefined")
    nxb = np.sqrt(np.sum(xbar * xbar, axis=1))
    out = np.full(x.shape[0], 180.0)
    ok = nxb > 0.0
    u = x[ok] / nx[ok, None]
    v = xbar[ok] / nxb[ok, None]
    diff = np.sqrt(np.sum((u - v) ** 2, axis=1))
    total = np.sqrt(np.sum((u + v) ** 2, axis=1))
    out[ok] = np.degrees(2.0 * np.arctan2(diff, total))
    return np.clip(out, 0.0, 180.0)


def select_samples(degrees, config: FilterConfig, eigenvalues_used=None) -> FilterReport:
    degrees = np.asarray(degrees, dtype=float)
    if degrees.ndim != 1 or degrees.size == 0:
        raise InputError("degrees must be a non-empty 1-D sequence")
    if np.any(~np.isfinite(degrees)) or np.any(degrees < 0) or np.any(degrees > 180):
        raise InputError("degrees must lie in [0, 180]")
    q = config.resolve_q(degrees)
    order = np.argsort(degrees, kind="stable")
    used = np.empty(0) if eigenvalues_used is None else np.asarray(eigenvalues_used, float)
    return FilterReport(degrees, order, order[:q].copy(), used)


def compute_degrees(x, t: int = 1):
    """Angles of every training row plus the eigenvalues of D that were used."""
    x = as_matrix(x, "X")
    lam, basis = smallest_eigenpairs(manhattan_distance_matrix(x), t)
    if t == x.shape[0]:
        # the basis spans every direction, so each row is its own projection;
        # exact zeros keep the selection independent of rounding noise
        return np.zeros(x.shape[0]), lam
    return sample_degrees(x, project_onto_subspace(x, basis)), lam


def filter_training_set(x, y, config: FilterConfig | None = None):
    """Keep the ``q`` lowest-angle samples.

    Returns the original (unprojected) rows and responses in ascending-angle
    order together with the :class:`FilterReport`.
    """
    config = config or FilterConfig()
    x = as_matrix(x, "X")
    y = np.asarray(y, dtype=float)
    if y.shape != (x.shape[0],):
        raise InputError(f"y has shape {y.shape}, expected ({x.shape[0]},)")
    if not np.all(np.isfinite(y)):
        raise InputError("y has non-finite values")
    degrees, lam = compute_degrees(x, config.t)
    report = select_samples(degrees, config, lam)
    return x[report.selected], y[report.selected], report
