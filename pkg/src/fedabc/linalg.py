"""Minimal dense linear-algebra kernel: Cholesky factorization and triangular solves.

Hand-rolled rather than LAPACK-backed so that factorizations do not depend on
the BLAS build; the summary spaces handled here are small (d <= ~32), where
O(d^3) loops over numpy rows are cheap.
"""
from __future__ import annotations

import math

import numpy as np

from .errors import DimensionMismatch, NotPositiveDefinite

SYMMETRY_TOL = 1e-9


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validate and convert to a 2-D float64 array with finite entries."""
    out = np.asarray(a, dtype=np.float64)
    if out.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got ndim={out.ndim}")
    if out.size and not np.all(np.isfinite(out)):
        raise ValueError(f"{name} contains non-finite entries")
    return out


def as_vector(v, name: str = "vector") -> np.ndarray:
    """Validate and convert to a 1-D float64 array with finite entries."""
    out = np.asarray(v, dtype=np.float64)
    if out.ndim != 1:
        raise DimensionMismatch(f"{name} must be 1-D, got ndim={out.ndim}")
    if out.size and not np.all(np.isfinite(out)):
        raise ValueError(f"{name} contains non-finite entries")
    return out


def cholesky(a) -> np.ndarray:
    """Lower-triangular L with L @ L.T == a.

    Args:
        a: square matrix, symmetric within ``SYMMETRY_TOL``, positive-definite.

    Raises:
        DimensionMismatch: if ``a`` is not square.
        ValueError: if ``a`` is not symmetric within tolerance.
        NotPositiveDefinite: if any pivot is <= 0.
    """
    a = as_matrix(a)
    n, m = a.shape
    if n != m:
        raise DimensionMismatch(f"cholesky needs a square matrix, got {n}x{m}")
    if n and np.max(np.abs(a - a.T)) > SYMMETRY_TOL:
        raise ValueError("matrix is not symmetric within tolerance")
    lower = np.zeros_like(a)
    for j in range(n):
        pivot = a[j, j] - float(lower[j, :j] @ lower[j, :j])
        if pivot <= 0.0:
            raise NotPositiveDefinite(f"pivot {pivot} at column {j}")
        lower[j, j] = math.sqrt(pivot)
        if j + 1 < n:
            lower[j + 1 :, j] = (a[j + 1 :, j] - lower[j + 1 :, :j] @ lower[j, :j]) / lower[j, j]
    return lower


def solve_lower(lower: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve L x = b by forward substitution. ``b`` may be a vector or matrix."""
    n = lower.shape[0]
    x = np.array(b, dtype=np.float64, copy=True)
    for i in range(n):
        x[i] = (x[i] - lower[i, :i] @ x[:i]) / lower[i, i]
    return x


def solve_lower_transpose(lower: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve L.T x = b by backward substitution."""
    n = lower.shape[0]
    x = np.array(b, dtype=np.float64, copy=True)
    for i in range(n - 1, -1, -1):
        x[i] = (x[i] - lower[i + 1 :, i] @ x[i + 1 :]) / lower[i, i]
    return x


def chol_solve(lower: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve (L @ L.T) x = b given the factor L."""
    return solve_lower_transpose(lower, solve_lower(lower, b))


def chol_inverse(lower: np.ndarray) -> np.ndarray:
    """Inverse of L @ L.T, symmetrized against roundoff."""
    inv = chol_solve(lower, np.eye(lower.shape[0]))
    return 0.5 * (inv + inv.T)


def log_det_from_cholesky(lower: np.ndarray) -> float:
    """log det(L @ L.T) from the factor diagonal."""
    return 2.0 * float(np.sum(np.log(np.diag(lower))))
