"""Coordinator and site roles for the discrepancy-only federated run.

The coordinator owns the prior and the proposal stream. Per iteration it draws
one parameter set and one generated summary row per observed row across all
sites, splits the generated rows contiguously in site order, and dispatches
them. Sites answer with scalar discrepancies only; the coordinator reassembles
them in proposal-index order and keeps the global top-L, which makes the run
bit-identical to :func:`fedabc.rejection.rejection_sample` on the concatenated
observed matrix.

Raw data, encoder weights, and decoder weights never touch the transport:
the site-side message type admits only Hello and DiscrepancyReport.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np

from .autoencoder import LabeledBatch, SummaryConfig, prepare_summary
from .errors import (
    DimensionMismatch,
    HandshakeMismatch,
    ReportShapeMismatch,
    TransportClosed,
)
from .linalg import as_matrix
from .protocol import (
    DiscrepancyReport,
    Hello,
    InProcessTransport,
    ProposalBatch,
    Terminate,
)
from .rejection import AbcConfig, Posterior, TopAcceptance, discrepancy_batch, draw_proposal_batch
from .rng import RngStream


@dataclass(frozen=True)
class SiteDescriptor:
    """One participating site: identity, local row count, agreed summary dim."""

    site_id: int
    n_j: int
    dim: int

    def __post_init__(self):
        if self.n_j < 1:
            raise ValueError("n_j must be >= 1")


@dataclass(frozen=True)
class FederationRunConfig:
    abc: AbcConfig
    sites: tuple[SiteDescriptor, ...]
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "sites", tuple(self.sites))
        if not self.sites:
            raise ValueError("at least one site is required")
        if len({s.site_id for s in self.sites}) != len(self.sites):
            raise ValueError("site ids must be unique")
        for s in self.sites:
            if s.dim != self.abc.dim:
                raise DimensionMismatch(
                    f"site {s.site_id} has dim {s.dim}, run dim is {self.abc.dim}"
                )

    @property
    def total_rows(self) -> int:
        return sum(s.n_j for s in self.sites)

    @property
    def n_iterations(self) -> int:
        return math.ceil(self.abc.n_proposals / self.total_rows)


def split_proposals(gen, sites: list[SiteDescriptor] | tuple[SiteDescriptor, ...]):
    """Contiguous partition of generated rows in site order."""
    gen = as_matrix(gen, "gen")
    total = sum(s.n_j for s in sites)
    if gen.shape[0] != total:
        raise DimensionMismatch(f"{gen.shape[0]} rows cannot split into {total}")
    return _split_rows(gen, sites)


def _split_rows(gen: np.ndarray, sites) -> list[np.ndarray]:
    """Greedy contiguous split; short input leaves trailing sites empty."""
    out = []
    start = 0
    for s in sites:
        stop = min(start + s.n_j, gen.shape[0])
        out.append(gen[start:stop])
        start = stop
    return out


def site_handle(local_enc, msg: ProposalBatch) -> DiscrepancyReport:
    """Answer one proposal batch with positional discrepancies.

    The batch may be shorter than the local row count (final iteration);
    row i of the batch pairs with local row i. The report carries the
    iteration id and scalars only.
    """
    local_enc = as_matrix(local_enc, "local_enc")
    count = msg.rows.shape[0]
    if count == 0:
        return DiscrepancyReport(iteration=msg.iteration, values=np.zeros(0))
    if count > local_enc.shape[0]:
        raise DimensionMismatch(
            f"batch has {count} rows but site holds {local_enc.shape[0]}"
        )
    values = discrepancy_batch(local_enc[:count], msg.rows)
    return DiscrepancyReport(iteration=msg.iteration, values=values)


def _handshake(config: FederationRunConfig, transports) -> dict[int, object]:
    """Collect one Hello per transport and map site_id -> transport."""
    expected = {s.site_id: s for s in config.sites}
    by_site: dict[int, object] = {}
    for transport in transports:
        msg = transport.recv(timeout=120.0)
        if not isinstance(msg, Hello):
            raise HandshakeMismatch(f"expected Hello, got {type(msg).__name__}")
        if msg.site_id not in expected:
            raise HandshakeMismatch(f"unknown site id {msg.site_id}")
        if msg.site_id in by_site:
            raise HandshakeMismatch(f"duplicate Hello from site {msg.site_id}")
        descriptor = expected[msg.site_id]
        if msg.n_j != descriptor.n_j or msg.dim != descriptor.dim:
            raise HandshakeMismatch(
                f"site {msg.site_id} announced n_j={msg.n_j}, dim={msg.dim}; "
                f"config says n_j={descriptor.n_j}, dim={descriptor.dim}"
            )
        by_site[msg.site_id] = transport
    return by_site


def coordinate(config: FederationRunConfig, transports) -> Posterior:
    """Run the coordinator loop over the given per-site duplex channels.

    Blocks per iteration until every site reported. Reports may arrive in any
    order across sites; discrepancies are reassembled in proposal-index order,
    so the result is independent of arrival order and equal to the centralized
    run with the same seed.
    """
    if len(transports) != len(config.sites):
        raise HandshakeMismatch(
            f"{len(transports)} transports for {len(config.sites)} sites"
        )
    by_site = _handshake(config, transports)
    ordered = [by_site[s.site_id] for s in config.sites]
    rng = RngStream(config.seed)
    tracker = TopAcceptance(config.abc.n_accept)
    total = config.total_rows
    n = config.abc.n_proposals
    index = 0
    for iteration in range(config.n_iterations):
        count = min(total, n - index)
        params_list, generated, components = draw_proposal_batch(
            config.abc.prior, config.abc.k, count, rng
        )
        batches = _split_rows(generated, config.sites)
        for transport, rows in zip(ordered, batches):
            transport.send(ProposalBatch(iteration=iteration, rows=rows))
        reports = []
        for site, transport, rows in zip(config.sites, ordered, batches):
            msg = transport.recv(timeout=600.0)
            if not isinstance(msg, DiscrepancyReport):
                raise ReportShapeMismatch(
                    f"site {site.site_id} sent {type(msg).__name__} instead of a report"
                )
            if msg.iteration != iteration:
                raise ReportShapeMismatch(
                    f"site {site.site_id} reported iteration {msg.iteration}, expected {iteration}"
                )
            if msg.values.shape[0] != rows.shape[0]:
                raise ReportShapeMismatch(
                    f"site {site.site_id} reported {msg.values.shape[0]} values "
                    f"for {rows.shape[0]} rows"
                )
            reports.append(msg.values)
        discs = np.concatenate(reports) if reports else np.zeros(0)
        for offset in range(count):
            tracker.offer(
                float(discs[offset]), index + offset, params_list[offset], int(components[offset])
            )
        index += count
    for transport in ordered:
        transport.send(Terminate())
    return tracker.finish()


@dataclass
class SiteSession:
    """Outcome of one site's participation in a run."""

    descriptor: SiteDescriptor
    batches_served: int = 0
    model: object | None = None
    published_rows: np.ndarray | None = None


def serve_site(descriptor: SiteDescriptor, local_enc, transport) -> SiteSession:
    """Serve frozen summary rows over a transport until Terminate.

    Sends the Hello announcement, then answers each ProposalBatch with a
    DiscrepancyReport. Closes the transport when the coordinator terminates.
    """
    local_enc = as_matrix(local_enc, "local_enc")
    if local_enc.shape != (descriptor.n_j, descriptor.dim):
        raise DimensionMismatch(
            f"published rows {local_enc.shape} do not match descriptor "
            f"({descriptor.n_j}, {descriptor.dim})"
        )
    session = SiteSession(descriptor=descriptor, published_rows=local_enc)
    transport.send(Hello(site_id=descriptor.site_id, n_j=descriptor.n_j, dim=descriptor.dim))
    while True:
        msg = transport.recv(timeout=600.0)
        if isinstance(msg, Terminate):
            transport.close()
            return session
        if isinstance(msg, ProposalBatch):
            transport.send(site_handle(local_enc, msg))
            session.batches_served += 1
        else:
            transport.close()
            raise TransportClosed(f"unexpected message {type(msg).__name__} at site")


def run_site(
    descriptor: SiteDescriptor,
    local_data: LabeledBatch,
    summary_cfg: SummaryConfig,
    transport,
    rng: RngStream,
) -> SiteSession:
    """Full site role: train the local summarizer, freeze rows, then serve.

    Decoder weights stay local; only the frozen summary rows feed the
    discrepancy computation and only scalars leave the site.
    """
    published, model = prepare_summary(local_data, summary_cfg, rng)
    if published.shape[0] != descriptor.n_j:
        raise DimensionMismatch(
            f"descriptor says n_j={descriptor.n_j}, local data has {published.shape[0]} rows"
        )
    session = serve_site(descriptor, published, transport)
    session.model = model
    return session


def run_federated_inprocess(
    config: FederationRunConfig, site_rows: list[np.ndarray]
) -> Posterior:
    """Convenience harness: queue transports, one thread per site, coordinate.

    ``site_rows[j]`` are the frozen summary rows of config.sites[j].
    """
    if len(site_rows) != len(config.sites):
        raise DimensionMismatch("one row matrix per site is required")
    coordinator_ends = []
    threads: list[threading.Thread] = []
    results: list[dict] = []
    for descriptor, rows in zip(config.sites, site_rows):
        coord_end, site_end = InProcessTransport.pair()
        coordinator_ends.append(coord_end)
        result: dict = {}
        results.append(result)

        def work(desc=descriptor, data=rows, channel=site_end, out=result):
            try:
                out["session"] = serve_site(desc, data, channel)
            except BaseException as exc:  # noqa: BLE001 - surfaced in the main thread
                out["error"] = exc

        thread = threading.Thread(target=work, daemon=True)
        threads.append(thread)
        thread.start()
    try:
        posterior = coordinate(config, coordinator_ends)
    finally:
        for end in coordinator_ends:
            end.close()
        for thread in threads:
            thread.join(timeout=60.0)
    for result in results:
        if "error" in result:
            raise result["error"]
    return posterior
