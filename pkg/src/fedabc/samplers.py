"""Primitive random variate generators used by the generative model.

All samplers consume an exclusively-owned :class:`~fedabc.rng.RngStream` and
have a fixed draw schedule, so equal (seed, parameters, call sequence) gives
bit-identical outputs.
"""
from __future__ import annotations

import math

import numpy as np

from .errors import DimensionMismatch, InvalidHyperparameter, InvalidWeights
from .linalg import as_matrix, as_vector, chol_inverse, cholesky, solve_lower
from .rng import RngStream

WEIGHT_SUM_TOL = 1e-9


def sample_mvn(mean, cov, rng: RngStream) -> np.ndarray:
    """One draw from N(mean, cov); cov must be symmetric positive-definite."""
    mean = as_vector(mean, "mean")
    cov = as_matrix(cov, "cov")
    if cov.shape[0] != mean.shape[0]:
        raise DimensionMismatch(
            f"mean has dim {mean.shape[0]} but cov is {cov.shape[0]}x{cov.shape[1]}"
        )
    lower = cholesky(cov)
    u = rng.standard_normal(mean.shape[0])
    return mean + lower @ u


def sample_dirichlet(alpha, rng: RngStream) -> np.ndarray:
    """One draw from Dirichlet(alpha) via normalized gamma variates."""
    alpha = as_vector(alpha, "alpha")
    if alpha.size == 0 or np.any(alpha <= 0.0):
        raise InvalidHyperparameter("Dirichlet concentrations must all be > 0")
    g = rng.standard_gamma(alpha)
    total = float(np.sum(g))
    while total == 0.0:  # all-zero underflow is possible for very small alpha
        g = rng.standard_gamma(alpha)
        total = float(np.sum(g))
    return g / total


def sample_inverse_wishart(nu: float, psi, rng: RngStream) -> np.ndarray:
    """One draw from the Inverse-Wishart with dof ``nu`` and scale ``psi``.

    Uses the Bartlett factorization of a Wishart(nu, psi^-1) draw followed by
    inversion: Sigma = (L_inv(psi) A A' L_inv(psi)')^-1. Requires nu > d - 1.
    """
    psi = as_matrix(psi, "psi")
    d = psi.shape[0]
    if psi.shape[1] != d:
        raise DimensionMismatch(f"psi must be square, got {psi.shape}")
    if nu <= d - 1:
        raise InvalidHyperparameter(f"inverse-Wishart needs nu > d - 1 = {d - 1}, got {nu}")
    scale_lower = cholesky(psi)
    inv_lower = cholesky(chol_inverse(scale_lower))
    # Bartlett factor: chi-square diagonal first, then subdiagonal normals row by row.
    bart = np.zeros((d, d))
    for i in range(d):
        bart[i, i] = math.sqrt(rng.chisquare(nu - i))
    for i in range(1, d):
        bart[i, :i] = rng.standard_normal(i)
    wishart_lower = inv_lower @ bart
    m_inv = solve_lower(wishart_lower, np.eye(d))
    sigma = m_inv.T @ m_inv
    return 0.5 * (sigma + sigma.T)


def sample_categorical(weights, rng: RngStream) -> int:
    """Index k with probability weights[k]; weights must sum to one."""
    w = as_vector(weights, "weights")
    if np.any(w < 0.0):
        raise InvalidWeights("negative category weight")
    if abs(float(np.sum(w)) - 1.0) > WEIGHT_SUM_TOL:
        raise InvalidWeights(f"weights sum to {float(np.sum(w))}, not 1")
    u = rng.random()
    idx = int(np.searchsorted(np.cumsum(w), u, side="right"))
    return min(idx, w.size - 1)
