"""Centralized ABC rejection sampling with top-L acceptance.

Proposals are drawn from the prior in rounds sized to the observed summary
matrix; each proposal generates exactly one summary-space sample, which is
paired positionally with an observed row. After all proposals, the L smallest
squared-distance discrepancies are accepted and the realized threshold is the
smallest rejected discrepancy (or the largest accepted one when nothing was
rejected).

The distributed coordinator reproduces this computation exactly; this module
is the reference it is tested against.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyPosterior, InsufficientProposals
from .gmm import GmmParams, PriorConfig, sample, sample_prior
from .linalg import as_matrix
from .rng import RngStream


@dataclass(frozen=True)
class AbcConfig:
    """Run shape: N proposals, L accepted, K components in d dimensions."""

    n_proposals: int
    n_accept: int
    k: int
    prior: PriorConfig
    dim: int

    def __post_init__(self):
        if self.n_accept < 1:
            raise InsufficientProposals("must accept at least one proposal")
        if self.n_proposals < self.n_accept:
            raise InsufficientProposals(
                f"N={self.n_proposals} proposals cannot cover L={self.n_accept}"
            )
        if self.prior.k != self.k:
            raise DimensionMismatch(f"prior has {self.prior.k} concentrations, k={self.k}")
        if self.prior.dim != self.dim:
            raise DimensionMismatch(f"prior dim {self.prior.dim} != config dim {self.dim}")


@dataclass(frozen=True)
class AcceptedDraw:
    params: GmmParams
    discrepancy: float
    proposal_index: int
    # Which component generated the proposal's sample. Known only to the
    # proposer (it drew the sample); used by the mode estimator.
    generating_component: int = 0


@dataclass(frozen=True)
class Posterior:
    """Accepted draws in ascending discrepancy order plus the realized threshold."""

    accepted: tuple[AcceptedDraw, ...]
    epsilon: float

    def __post_init__(self):
        discs = [a.discrepancy for a in self.accepted]
        if any(b < a for a, b in zip(discs, discs[1:])):
            raise ValueError("accepted discrepancies must be non-decreasing")
        if any(d > self.epsilon for d in discs):
            raise ValueError("accepted discrepancy exceeds epsilon")

    def params_list(self) -> list[GmmParams]:
        return [a.params for a in self.accepted]

    def discrepancies(self) -> np.ndarray:
        return np.array([a.discrepancy for a in self.accepted])

    def indices(self) -> list[int]:
        return [a.proposal_index for a in self.accepted]

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "accepted": [
                {
                    "proposal_index": a.proposal_index,
                    "discrepancy": a.discrepancy,
                    "generating_component": a.generating_component,
                    "params": a.params.to_dict(),
                }
                for a in self.accepted
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Posterior":
        return cls(
            accepted=tuple(
                AcceptedDraw(
                    params=GmmParams.from_dict(a["params"]),
                    discrepancy=float(a["discrepancy"]),
                    proposal_index=int(a["proposal_index"]),
                    generating_component=int(a.get("generating_component", 0)),
                )
                for a in doc["accepted"]
            ),
            epsilon=float(doc["epsilon"]),
        )


def discrepancy_batch(enc, gen) -> np.ndarray:
    """Row-wise squared Euclidean distance between positionally paired rows."""
    enc = as_matrix(enc, "enc")
    gen = as_matrix(gen, "gen")
    if enc.shape != gen.shape:
        raise DimensionMismatch(f"shape mismatch: {enc.shape} vs {gen.shape}")
    diff = enc - gen
    return np.einsum("ij,ij->i", diff, diff)


class TopAcceptance:
    """Bookkeeping for the L smallest (discrepancy, proposal index) pairs.

    Keeps one extra entry beyond L so the realized threshold (the smallest
    rejected discrepancy) is available without storing every proposal. Ties
    break by proposal index, matching a stable full sort.
    """

    def __init__(self, n_accept: int):
        self.n_accept = n_accept
        self._heap: list[tuple[float, int, GmmParams, int]] = []
        self._seen = 0

    def offer(self, discrepancy: float, index: int, params: GmmParams, component: int = 0) -> None:
        self._seen += 1
        heapq.heappush(self._heap, (-discrepancy, -index, params, component))
        if len(self._heap) > self.n_accept + 1:
            heapq.heappop(self._heap)

    def finish(self) -> Posterior:
        entries = sorted((-d, -i, p, c) for d, i, p, c in self._heap)
        if self._seen > self.n_accept:
            cut = entries[self.n_accept][0]  # smallest rejected discrepancy
            entries = entries[: self.n_accept]
        else:
            cut = entries[-1][0]
        return Posterior(
            accepted=tuple(AcceptedDraw(p, d, i, c) for d, i, p, c in entries),
            epsilon=cut,
        )


def draw_proposal_batch(
    prior: PriorConfig, k: int, count: int, rng: RngStream
) -> tuple[list[GmmParams], np.ndarray, np.ndarray]:
    """Draw ``count`` parameter sets, one generated summary row each.

    Also returns which component generated each row; that record stays with
    the proposer. The draw schedule is strictly sequential in proposal order;
    the coordinator and the centralized sampler both use this helper so their
    streams stay aligned.
    """
    params_list: list[GmmParams] = []
    rows = np.empty((count, prior.dim))
    components = np.empty(count, dtype=np.int64)
    for i in range(count):
        params = sample_prior(prior, k, rng)
        generated, assignment = sample(params, 1, rng)
        params_list.append(params)
        rows[i] = generated[0]
        components[i] = assignment[0]
    return params_list, rows, components


def rejection_sample(config: AbcConfig, observed_enc, rng: RngStream) -> Posterior:
    """Run N prior proposals against the observed summary rows.

    Rounds are sized min(M, remaining) where M is the observed row count;
    proposal i within a round is paired with observed row i. Deterministic
    given the stream.
    """
    observed = as_matrix(observed_enc, "observed_enc")
    m = observed.shape[0]
    if m < 1:
        raise DimensionMismatch("observed summary matrix must have at least one row")
    if observed.shape[1] != config.dim:
        raise DimensionMismatch(
            f"observed rows have dim {observed.shape[1]}, config dim is {config.dim}"
        )
    tracker = TopAcceptance(config.n_accept)
    index = 0
    while index < config.n_proposals:
        count = min(m, config.n_proposals - index)
        params_list, generated, components = draw_proposal_batch(config.prior, config.k, count, rng)
        discs = discrepancy_batch(observed[:count], generated)
        for offset in range(count):
            tracker.offer(
                float(discs[offset]), index + offset, params_list[offset], int(components[offset])
            )
        index += count
    return tracker.finish()


def _canonical_component_order(params: GmmParams) -> GmmParams:
    """Reorder components lexicographically by mean vector."""
    keys = tuple(params.means[:, c] for c in range(params.dim - 1, -1, -1))
    order = np.lexsort(keys)
    return GmmParams(
        weights=params.weights[order],
        means=params.means[order],
        covs=params.covs[order],
    )


def _project_to_pd(mat: np.ndarray, floor: float = 1e-9) -> np.ndarray:
    """Nearest-symmetric projection with an eigenvalue floor."""
    sym = 0.5 * (mat + mat.T)
    vals, vecs = np.linalg.eigh(sym)
    vals = np.maximum(vals, floor)
    return (vecs * vals) @ vecs.T


def summarize_posterior(posterior: Posterior) -> GmmParams:
    """Point estimate: canonically order each accepted draw, then average.

    Components are sorted by mean vector within each draw before the
    element-wise average so label switching across draws does not corrupt it.
    Averaged weights are renormalized and averaged covariances projected back
    to symmetric positive-definite.
    """
    if not posterior.accepted:
        raise EmptyPosterior("no accepted draws to summarize")
    ordered = [_canonical_component_order(a.params) for a in posterior.accepted]
    weights = np.mean([p.weights for p in ordered], axis=0)
    means = np.mean([p.means for p in ordered], axis=0)
    covs = np.mean([p.covs for p in ordered], axis=0)
    weights = weights / weights.sum()
    covs = np.stack([_project_to_pd(c) for c in covs])
    return GmmParams(weights=weights, means=means, covs=covs)


def mixture_mode_estimate(posterior: Posterior) -> GmmParams:
    """Posterior mode as a mixture: cluster the accepted generating components.

    Each accepted proposal constrains exactly one of its components, namely
    the one that generated the sample whose discrepancy survived acceptance;
    the remaining components stay prior-distributed, so averaging across whole
    draws washes the signal out. This estimator collects the generating
    component of every accepted draw and clusters those means into K groups
    (farthest-first seeding plus Lloyd iterations, deterministic). Per group
    it reports the member mean of mu and Sigma and the member share of
    acceptance mass as the weight.
    """
    if not posterior.accepted:
        raise EmptyPosterior("no accepted draws to summarize")
    k = posterior.accepted[0].params.k
    mus = np.vstack(
        [a.params.means[a.generating_component] for a in posterior.accepted]
    )
    covs = np.stack([a.params.covs[a.generating_component] for a in posterior.accepted])
    centers = _farthest_first_centers(mus, k)
    labels = None
    for _round in range(50):
        dists = np.linalg.norm(mus[:, None, :] - centers[None, :, :], axis=2)
        new_labels = np.argmin(dists, axis=1)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(k):
            members = labels == j
            if members.any():
                centers[j] = mus[members].mean(axis=0)
    weights = np.array([max(int(np.sum(labels == j)), 0) for j in range(k)], dtype=np.float64)
    if weights.sum() == 0:
        raise EmptyPosterior("no cluster members")
    weights = weights / weights.sum()
    # empty clusters keep their seed center and get a unit covariance
    out_covs = np.empty((k, mus.shape[1], mus.shape[1]))
    for j in range(k):
        members = labels == j
        if members.any():
            out_covs[j] = _project_to_pd(covs[members].mean(axis=0))
        else:
            out_covs[j] = np.eye(mus.shape[1])
    floor = 1e-6
    weights = np.maximum(weights, floor)
    weights = weights / weights.sum()
    return GmmParams(weights=weights, means=centers, covs=out_covs)


def _farthest_first_centers(points: np.ndarray, k: int) -> np.ndarray:
    """Deterministic k-center seeding: start at the medoid, then repeatedly
    take the point farthest from the chosen set."""
    total = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=2).sum(axis=1)
    chosen = [int(np.argmin(total))]
    while len(chosen) < k:
        dists = np.min(
            np.linalg.norm(points[:, None, :] - points[chosen][None, :, :], axis=2), axis=1
        )
        chosen.append(int(np.argmax(dists)))
    return points[chosen].astype(np.float64).copy()


def ks_statistic(a, b) -> float:
    """Two-sample Kolmogorov-Smirnov statistic (sup ECDF gap)."""
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.sort(np.asarray(b, dtype=np.float64))
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be non-empty")
    grid = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, grid, side="right") / a.size
    cdf_b = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(cdf_a - cdf_b)))


def prior_limit_check(config: AbcConfig, observed_enc, rng: RngStream) -> float:
    """KS statistic between the accepted first-weight marginal and fresh prior draws.

    Only meaningful in the accept-everything regime, so L must equal N; a
    large-threshold run should then be indistinguishable from the prior.
    """
    if config.n_accept != config.n_proposals:
        raise ValueError("prior_limit_check requires L == N")
    posterior = rejection_sample(config, observed_enc, rng)
    accepted_pi1 = np.array([a.params.weights[0] for a in posterior.accepted])
    from .samplers import sample_dirichlet

    fresh_pi1 = np.array(
        [sample_dirichlet(config.prior.alpha, rng)[0] for _ in range(config.n_proposals)]
    )
    return ks_statistic(accepted_pi1, fresh_pi1)
