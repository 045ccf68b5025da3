"""Gaussian mixture model: density, sampling, and its conjugate-style prior.

The mixture lives in the d-dimensional summary space. Parameters are a weight
vector pi over K components plus per-component mean and covariance. The prior
draws pi from a Dirichlet and each (mean, covariance) pair from a
Normal-Inverse-Wishart: Sigma_k ~ IW(nu, psi), then mu_k ~ N(m, Sigma_k / kappa).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InvalidHyperparameter, NotPositiveDefinite
from .linalg import as_matrix, as_vector, cholesky, log_det_from_cholesky, solve_lower
from .rng import RngStream
from .samplers import (
    WEIGHT_SUM_TOL,
    sample_categorical,
    sample_dirichlet,
    sample_inverse_wishart,
    sample_mvn,
)

_LOG_2PI = math.log(2.0 * math.pi)
_MAX_COV_REDRAWS = 100


@dataclass(frozen=True)
class GmmParams:
    """Mixture parameters: weights (K,), means (K, d), covs (K, d, d).

    Immutable after construction; every covariance must pass a Cholesky
    factorization and the weights must sum to one.
    """

    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray

    def __post_init__(self):
        weights = as_vector(self.weights, "weights")
        means = as_matrix(self.means, "means")
        covs = np.asarray(self.covs, dtype=np.float64)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covs", covs)
        k, d = means.shape
        if weights.shape != (k,):
            raise DimensionMismatch(f"expected {k} weights, got {weights.shape}")
        if covs.shape != (k, d, d):
            raise DimensionMismatch(f"expected covs of shape {(k, d, d)}, got {covs.shape}")
        if not np.all(np.isfinite(covs)):
            raise ValueError("covs contain non-finite entries")
        if np.any(weights < 0.0) or np.any(weights > 1.0):
            raise ValueError("weights must lie in [0, 1]")
        if abs(float(weights.sum()) - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"weights sum to {float(weights.sum())}, not 1")
        for j in range(k):
            cholesky(covs[j])  # raises NotPositiveDefinite / ValueError

    @property
    def k(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "dim": self.dim,
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "covs": self.covs.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "GmmParams":
        params = cls(
            weights=np.asarray(doc["weights"], dtype=np.float64),
            means=np.asarray(doc["means"], dtype=np.float64),
            covs=np.asarray(doc["covs"], dtype=np.float64),
        )
        if params.k != doc["k"] or params.dim != doc["dim"]:
            raise DimensionMismatch("k/dim fields disagree with array shapes")
        return params


@dataclass(frozen=True)
class PriorConfig:
    """Dirichlet + Normal-Inverse-Wishart hyperparameters."""

    alpha: np.ndarray
    nu: float
    psi: np.ndarray
    m: np.ndarray
    kappa: float

    def __post_init__(self):
        alpha = as_vector(self.alpha, "alpha")
        psi = as_matrix(self.psi, "psi")
        m = as_vector(self.m, "m")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "nu", float(self.nu))
        object.__setattr__(self, "kappa", float(self.kappa))
        if np.any(alpha <= 0.0):
            raise InvalidHyperparameter("all Dirichlet concentrations must be > 0")
        d = psi.shape[0]
        if m.shape != (d,):
            raise DimensionMismatch(f"location m has dim {m.shape[0]}, psi is {d}x{d}")
        if self.nu <= d - 1:
            raise InvalidHyperparameter(f"nu must exceed d - 1 = {d - 1}, got {self.nu}")
        if self.kappa <= 0.0:
            raise InvalidHyperparameter("kappa must be positive")
        cholesky(psi)

    @property
    def k(self) -> int:
        return self.alpha.shape[0]

    @property
    def dim(self) -> int:
        return self.psi.shape[0]


def default_prior(k: int, dim: int, spread: float = 1.0) -> PriorConfig:
    """Weakly informative prior: flat Dirichlet, zero location, psi = spread * I."""
    if spread <= 0.0:
        raise InvalidHyperparameter("spread must be positive")
    return PriorConfig(
        alpha=np.ones(k),
        nu=dim + 2,
        psi=np.eye(dim) * spread,
        m=np.zeros(dim),
        kappa=0.1,
    )


def _component_log_pdfs(x: np.ndarray, params: GmmParams) -> np.ndarray:
    """log pi_k + log N(x | mu_k, Sigma_k) for each component, -inf at pi_k = 0."""
    out = np.empty(params.k)
    for j in range(params.k):
        if params.weights[j] == 0.0:
            out[j] = -np.inf
            continue
        lower = cholesky(params.covs[j])
        y = solve_lower(lower, x - params.means[j])
        quad = float(y @ y)
        out[j] = (
            math.log(params.weights[j])
            - 0.5 * (quad + params.dim * _LOG_2PI + log_det_from_cholesky(lower))
        )
    return out


def density(x, params: GmmParams) -> float:
    """Mixture density sum_k pi_k N(x | mu_k, Sigma_k), computed in log space."""
    x = as_vector(x, "x")
    if x.shape[0] != params.dim:
        raise DimensionMismatch(f"x has dim {x.shape[0]}, model dim is {params.dim}")
    logs = _component_log_pdfs(x, params)
    top = float(np.max(logs))
    if top == -np.inf:
        return 0.0
    return math.exp(top) * float(np.sum(np.exp(logs - top)))


def log_likelihood(data, params: GmmParams) -> float:
    """Sum of log density over rows; empty data gives 0."""
    data = as_matrix(data, "data")
    if data.shape[0] == 0:
        return 0.0
    if data.shape[1] != params.dim:
        raise DimensionMismatch(f"data has {data.shape[1]} columns, model dim is {params.dim}")
    total = 0.0
    for row in data:
        logs = _component_log_pdfs(row, params)
        top = float(np.max(logs))
        total += top + math.log(float(np.sum(np.exp(logs - top))))
    return total


def sample(params: GmmParams, n: int, rng: RngStream) -> tuple[np.ndarray, np.ndarray]:
    """Draw n rows from the mixture; returns (rows, component assignments).

    Per row the schedule is one categorical draw followed by dim standard
    normals. Assignments exist for test oracles only and are never transmitted.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rows = np.empty((n, params.dim))
    assignments = np.empty(n, dtype=np.int64)
    factors: dict[int, np.ndarray] = {}
    for i in range(n):
        z = sample_categorical(params.weights, rng)
        lower = factors.get(z)
        if lower is None:
            lower = cholesky(params.covs[z])
            factors[z] = lower
        u = rng.standard_normal(params.dim)
        rows[i] = params.means[z] + lower @ u
        assignments[i] = z
    return rows, assignments


def sample_prior(prior: PriorConfig, k: int, rng: RngStream) -> GmmParams:
    """Draw mixture parameters from the prior.

    pi ~ Dir(alpha); independently per component Sigma ~ IW(nu, psi) and
    mu ~ N(m, Sigma / kappa). Covariance draws that fail a Cholesky
    factorization numerically are redrawn, up to a cap.
    """
    if k != prior.k:
        raise InvalidHyperparameter(f"prior has {prior.k} concentrations, asked for k={k}")
    weights = sample_dirichlet(prior.alpha, rng)
    d = prior.dim
    means = np.empty((k, d))
    covs = np.empty((k, d, d))
    for j in range(k):
        for attempt in range(_MAX_COV_REDRAWS):
            cov = sample_inverse_wishart(prior.nu, prior.psi, rng)
            try:
                cholesky(cov)
            except NotPositiveDefinite:
                continue
            break
        else:
            raise NotPositiveDefinite(
                f"no positive-definite covariance draw in {_MAX_COV_REDRAWS} attempts"
            )
        covs[j] = cov
        means[j] = sample_mvn(prior.m, cov / prior.kappa, rng)
    return GmmParams(weights=weights, means=means, covs=covs)
