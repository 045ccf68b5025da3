"""Experiment scenarios: configuration, data plumbing, and report emission.

Three built-in scenarios plus a CSV-backed custom one:

* ``trimodal``  -- parameter recovery on a three-mode 2-D mixture, one mode
  per site, identity summary map (the data is already low-dimensional).
* ``imbalance`` -- three sites with a 6:1 class ratio; the minority class is
  oversampled from the federated mixture and a logistic classifier is scored
  per site before and after augmentation.
* ``scarce``    -- six sites where the last three lost almost all minority
  samples; augmentation restores them.
* ``custom``    -- the imbalance pipeline over user-supplied per-site CSVs.

Every run writes four files into the output directory: ``config.json`` (the
resolved configuration snapshot), ``posterior.json``, ``metrics.csv``, and
``manifest.json`` (version, wall-clock timings, scenario parameters). All
files except the manifest are byte-deterministic for a fixed config and seed.
"""
from __future__ import annotations

import json
import math
import subprocess
import threading
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .autoencoder import LabeledBatch, SummaryConfig, encode, init_model, train
from .datasets import generate_trimodal, ingest_csv, stratified_split
from .errors import FedAbcError, MinorityTooSmall, SingleClassData
from .federation import (
    FederationRunConfig,
    SiteDescriptor,
    coordinate,
    run_federated_inprocess,
    serve_site,
)
from .gmm import PriorConfig, sample as gmm_sample
from .metrics import (
    EvalReport,
    auc,
    f1_at_cutoff,
    fit_logistic,
    select_cutoff,
    write_report_csv,
)
from .protocol import SiteListener, connect_socket
from .rejection import AbcConfig, Posterior, mixture_mode_estimate
from .rng import RngStream

# split indices of the root stream, one lane per subsystem
_LANE_DATA = 1
_LANE_AE_INIT = 2
_LANE_AE_TRAIN = 3
_LANE_PUBLISH = 4
_LANE_POOLED = 5
_LANE_EVAL = 6
_LANE_AUGMENT = 7
_LANE_SPLIT = 8


@dataclass
class PriorSpec:
    """Hyperparameters with weakly-informative defaults; psi = psi_scale * I."""

    alpha: float = 1.0
    nu: float | None = None
    kappa: float = 0.1
    m: float = 0.0
    psi_scale: float = 1.0

    def build(self, k: int, dim: int) -> PriorConfig:
        return PriorConfig(
            alpha=np.full(k, float(self.alpha)),
            nu=float(self.nu) if self.nu is not None else dim + 2,
            psi=np.eye(dim) * float(self.psi_scale),
            m=np.full(dim, float(self.m)),
            kappa=float(self.kappa),
        )


@dataclass
class AbcSpec:
    n_proposals: int = 5000
    n_accept: int = 100
    k: int = 2


@dataclass
class EvalSpec:
    epochs: int = 400
    learning_rate: float = 0.5


@dataclass
class TransportSpec:
    kind: str = "inprocess"  # "inprocess" | "socket"
    address: str = "127.0.0.1:0"

    def host_port(self) -> tuple[str, int]:
        host, _, port = self.address.rpartition(":")
        return host or "127.0.0.1", int(port)


@dataclass
class SiteSpec:
    """Data source for one site in the custom scenario."""

    source: str
    label_column: str = "label"


@dataclass
class DataSpec:
    """Synthetic fixture layout shared by the scenarios.

    A site's data is its (imbalanced) training pool; metrics are computed on
    a fresh draw from the same class conditionals, so evaluation noise does
    not force the training pool to grow. The custom scenario splits the
    user's CSV instead (see ``test_fraction``).
    """

    n_per_component: int = 300  # trimodal
    n_sites: int = 3
    dim: int = 16
    n_majority: int = 120
    n_minority: int = 20
    n_test_majority: int = 150
    n_test_minority: int = 60
    class_sep: float = 2.0
    site_shift_scale: float = 0.0
    # Each site's minority TRAIN draw is offset along its own raw axis by this
    # amount, so no single site sees the full minority population; test sets
    # draw from the population mixture. Zero keeps sites homogeneous.
    minority_site_offset: float = 0.0
    test_fraction: float = 0.3  # custom scenario only
    repeats: int = 20
    n_affected: int = 3  # scarce: trailing sites that lost minority samples
    retention: float = 0.05  # scarce: fraction of minority samples kept


@dataclass
class ExperimentConfig:
    scenario: str
    seed: int
    abc: AbcSpec = field(default_factory=AbcSpec)
    prior: PriorSpec = field(default_factory=PriorSpec)
    summary: SummaryConfig = field(default_factory=lambda: SummaryConfig(latent_dim=2))
    eval: EvalSpec = field(default_factory=EvalSpec)
    transport: TransportSpec = field(default_factory=TransportSpec)
    data: DataSpec = field(default_factory=DataSpec)
    sites: list[SiteSpec] = field(default_factory=list)
    shared_encoder_init: bool = True
    output_dir: str = "out"

    def to_dict(self) -> dict:
        doc = asdict(self)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = {
            "scenario",
            "seed",
            "abc",
            "prior",
            "summary",
            "eval",
            "transport",
            "data",
            "sites",
            "shared_encoder_init",
            "output_dir",
        }
        unknown = set(doc) - known
        if unknown:
            raise FedAbcError(f"unknown config keys: {sorted(unknown)}")
        if "scenario" not in doc or "seed" not in doc:
            raise FedAbcError("config requires 'scenario' and 'seed'")
        scenario = doc["scenario"]
        if scenario not in ("trimodal", "imbalance", "scarce", "custom"):
            raise FedAbcError(f"unknown scenario {scenario!r}")
        cfg = cls(
            scenario=scenario,
            seed=int(doc["seed"]),
            abc=AbcSpec(**doc.get("abc", {})),
            prior=PriorSpec(**doc.get("prior", {})),
            summary=SummaryConfig(**doc.get("summary", {"latent_dim": 2})),
            eval=EvalSpec(**doc.get("eval", {})),
            transport=TransportSpec(**doc.get("transport", {})),
            data=DataSpec(**doc.get("data", {})),
            sites=[SiteSpec(**s) for s in doc.get("sites", [])],
            shared_encoder_init=bool(doc.get("shared_encoder_init", True)),
            output_dir=doc.get("output_dir", "out"),
        )
        if cfg.scenario == "custom" and not cfg.sites:
            raise FedAbcError("custom scenario requires a 'sites' list of CSV sources")
        return cfg


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as handle:
            doc = json.load(handle)
    except (OSError, json.JSONDecodeError) as exc:
        raise FedAbcError(f"cannot load config {path}: {exc}") from exc
    return ExperimentConfig.from_dict(doc)


def default_config(scenario: str, seed: int = 0) -> ExperimentConfig:
    """Shipped fixture configuration for each scenario."""
    if scenario == "trimodal":
        return ExperimentConfig(
            scenario="trimodal",
            seed=seed,
            abc=AbcSpec(n_proposals=50000, n_accept=100, k=3),
            prior=PriorSpec(psi_scale=4.0),
            summary=SummaryConfig(latent_dim=2, identity=True),
            data=DataSpec(n_per_component=300, n_sites=3),
        )
    if scenario == "imbalance":
        return ExperimentConfig(
            scenario="imbalance",
            seed=seed,
            abc=AbcSpec(n_proposals=20000, n_accept=100, k=3),
            prior=PriorSpec(psi_scale=1.0),
            summary=SummaryConfig(
                latent_dim=8, hidden_dims=[], epochs=200, learning_rate=3e-3,
                noise_alpha=0.05,
            ),
            data=DataSpec(
                n_sites=3,
                dim=16,
                n_majority=120,
                n_minority=20,
                n_test_majority=150,
                n_test_minority=60,
                class_sep=1.5,
                site_shift_scale=0.0,
                minority_site_offset=3.0,
                repeats=20,
            ),
        )
    if scenario == "scarce":
        # identity summary: zero-minority sites cannot anchor an encoder for a
        # class they never saw, so the restoration property is tested on the
        # low-dimensional features directly
        return ExperimentConfig(
            scenario="scarce",
            seed=seed,
            abc=AbcSpec(n_proposals=20000, n_accept=100, k=1),
            prior=PriorSpec(psi_scale=1.0),
            summary=SummaryConfig(latent_dim=6, identity=True, noise_alpha=0.05),
            data=DataSpec(
                n_sites=6,
                n_affected=3,
                retention=0.05,
                dim=6,
                n_majority=120,
                n_minority=16,
                n_test_majority=150,
                n_test_minority=60,
                class_sep=2.5,
                site_shift_scale=0.0,
                repeats=20,
            ),
        )
    raise FedAbcError(f"no default config for scenario {scenario!r}")


# ---------------------------------------------------------------------------
# scenario preparation (shared between the in-process harness and the
# standalone site process, so both derive identical published rows)
# ---------------------------------------------------------------------------


@dataclass
class TrimodalPrep:
    fed_config: FederationRunConfig
    site_rows: list[np.ndarray]
    true_params: object


def prepare_trimodal(cfg: ExperimentConfig) -> TrimodalPrep:
    root = RngStream(cfg.seed)
    data = generate_trimodal(cfg.data.n_per_component, root.split(_LANE_DATA))
    n_sites = cfg.data.n_sites
    rows_per_site = data.x.shape[0] // n_sites
    descriptors = tuple(
        SiteDescriptor(site_id=j, n_j=rows_per_site, dim=2) for j in range(n_sites)
    )
    site_rows = [
        data.x[j * rows_per_site : (j + 1) * rows_per_site] for j in range(n_sites)
    ]
    prior = cfg.prior.build(cfg.abc.k, 2)
    abc_cfg = AbcConfig(
        n_proposals=cfg.abc.n_proposals,
        n_accept=cfg.abc.n_accept,
        k=cfg.abc.k,
        prior=prior,
        dim=2,
    )
    fed = FederationRunConfig(abc=abc_cfg, sites=descriptors, seed=cfg.seed)
    return TrimodalPrep(fed_config=fed, site_rows=site_rows, true_params=data.true_params)


@dataclass
class SiteData:
    site_id: int
    train: LabeledBatch
    test: LabeledBatch
    model: object = None
    enc_train: np.ndarray | None = None
    enc_test: np.ndarray | None = None
    published_minority: np.ndarray | None = None


@dataclass
class AugmentationPrep:
    fed_config: FederationRunConfig | None
    sites: list[SiteData]
    participating: list[SiteData]
    site_rows: list[np.ndarray]
    pooled_train: LabeledBatch
    pooled_test: LabeledBatch
    pooled_enc: tuple[np.ndarray, np.ndarray] | None


def _minority_component_offset(spec: DataSpec, component: int) -> np.ndarray:
    """Raw-space offset of one minority sub-population (orthogonal to the
    class-separation axis, one axis per site)."""
    delta = np.zeros(spec.dim)
    if spec.minority_site_offset:
        delta[1 + (component % (spec.dim - 1))] = spec.minority_site_offset
    return delta


def _minority_base(spec: DataSpec) -> np.ndarray:
    base = np.zeros(spec.dim)
    base[0] = spec.class_sep
    return base


def _synthetic_site_data(cfg: ExperimentConfig) -> list[tuple[LabeledBatch, LabeledBatch]]:
    """Per-site (train, test) batches for the synthetic scenarios.

    A site's training pool carries the configured imbalance; its minority rows
    come from the site's own sub-population only (offset per site when
    ``minority_site_offset`` is nonzero), while the test batch is a fresh
    evaluation-sized draw whose minority rows cycle over all sub-populations.
    Scarce sites additionally keep only ``retention`` of their minority rows.
    """
    root = RngStream(cfg.seed)
    data_rng = root.split(_LANE_DATA)
    spec = cfg.data
    out = []
    for j in range(spec.n_sites):
        site_rng = data_rng.split(j)
        n_minority = spec.n_minority
        affected = cfg.scenario == "scarce" and j >= spec.n_sites - spec.n_affected
        if affected:
            n_minority = int(math.floor(spec.retention * spec.n_minority))
        shift = spec.site_shift_scale * site_rng.standard_normal(spec.dim)
        base = _minority_base(spec)

        train_maj = site_rng.standard_normal((spec.n_majority, spec.dim)) + shift
        train_min = (
            site_rng.standard_normal((max(n_minority, 0), spec.dim))
            + base
            + _minority_component_offset(spec, j)
            + shift
        )
        train_rows = np.vstack([train_maj, train_min])
        train_labels = np.concatenate(
            [np.zeros(spec.n_majority), np.ones(max(n_minority, 0))]
        ).astype(np.int64)
        order = site_rng.permutation(train_rows.shape[0])

        test_maj = site_rng.standard_normal((spec.n_test_majority, spec.dim)) + shift
        test_min = site_rng.standard_normal((spec.n_test_minority, spec.dim)) + base + shift
        for i in range(spec.n_test_minority):
            test_min[i] += _minority_component_offset(spec, i % spec.n_sites)
        test_rows = np.vstack([test_maj, test_min])
        test_labels = np.concatenate(
            [np.zeros(spec.n_test_majority), np.ones(spec.n_test_minority)]
        ).astype(np.int64)
        test_order = site_rng.permutation(test_rows.shape[0])

        out.append(
            (
                LabeledBatch(train_rows[order], train_labels[order]),
                LabeledBatch(test_rows[test_order], test_labels[test_order]),
            )
        )
    return out


def _csv_site_data(cfg: ExperimentConfig) -> list[tuple[LabeledBatch, LabeledBatch]]:
    root = RngStream(cfg.seed)
    split_rng = root.split(_LANE_SPLIT)
    out = []
    for j, site in enumerate(cfg.sites):
        ds = ingest_csv(site.source, site.label_column)
        train_idx, test_idx = stratified_split(ds.y, cfg.data.test_fraction, split_rng.split(j))
        out.append(
            (
                LabeledBatch(ds.x[train_idx], ds.y[train_idx]),
                LabeledBatch(ds.x[test_idx], ds.y[test_idx]),
            )
        )
    return out


def _train_site_encoder(cfg: ExperimentConfig, site: SiteData, root: RngStream):
    summary = cfg.summary
    if summary.identity:
        if site.train.x.shape[1] != summary.latent_dim:
            raise FedAbcError(
                f"identity summary needs latent_dim == raw dim, got "
                f"{summary.latent_dim} != {site.train.x.shape[1]}"
            )
        site.model = None
        site.enc_train = site.train.x.copy()
        site.enc_test = site.test.x.copy()
        minority = site.enc_train[site.train.y == 1]
        if summary.publish_noisy and minority.shape[0]:
            noise_rng = root.split(_LANE_PUBLISH).split(site.site_id)
            minority = minority + math.sqrt(summary.noise_alpha) * noise_rng.standard_normal(
                minority.shape
            )
        site.published_minority = minority
        return
    input_dim = site.train.x.shape[1]
    hidden = summary.hidden_dims if summary.hidden_dims else [max(input_dim, 8)]
    dims = [input_dim, *hidden, summary.latent_dim]
    if cfg.shared_encoder_init:
        # mirrored initialization and training randomness: sites still train
        # independently on their own data, but from a common starting point
        # and draw schedule, which keeps their latent spaces comparable
        init_rng = root.split(_LANE_AE_INIT).split(0)
        train_rng = root.split(_LANE_AE_TRAIN).split(0)
    else:
        init_rng = root.split(_LANE_AE_INIT).split(1 + site.site_id)
        train_rng = root.split(_LANE_AE_TRAIN).split(1 + site.site_id)
    model = init_model(dims, summary.noise_alpha, init_rng)
    model = train(
        model,
        site.train,
        summary.epochs,
        summary.learning_rate,
        summary.batch_size,
        train_rng,
    )
    site.model = model
    site.enc_train = encode(model, site.train.x)
    site.enc_test = encode(model, site.test.x)
    minority = site.enc_train[site.train.y == 1]
    if summary.publish_noisy and minority.shape[0]:
        noise_rng = root.split(_LANE_PUBLISH).split(site.site_id)
        minority = minority + math.sqrt(summary.noise_alpha) * noise_rng.standard_normal(
            minority.shape
        )
    site.published_minority = minority


def prepare_augmentation(cfg: ExperimentConfig) -> AugmentationPrep:
    root = RngStream(cfg.seed)
    if cfg.scenario == "custom":
        batches = _csv_site_data(cfg)
    else:
        batches = _synthetic_site_data(cfg)
    sites = [
        SiteData(site_id=j, train=train, test=test)
        for j, (train, test) in enumerate(batches)
    ]
    if cfg.scenario == "imbalance" or cfg.scenario == "custom":
        for site in sites:
            if int(np.sum(site.train.y == 1)) < 2:
                raise MinorityTooSmall(
                    f"site {site.site_id} has fewer than 2 minority training samples"
                )
    for site in sites:
        _train_site_encoder(cfg, site, root)
    participating = [s for s in sites if s.published_minority.shape[0] >= 1]
    if sum(s.published_minority.shape[0] for s in participating) < 2:
        raise MinorityTooSmall("fewer than 2 minority samples available across sites")
    d = cfg.summary.latent_dim
    descriptors = tuple(
        SiteDescriptor(site_id=s.site_id, n_j=s.published_minority.shape[0], dim=d)
        for s in participating
    )
    prior = cfg.prior.build(cfg.abc.k, d)
    abc_cfg = AbcConfig(
        n_proposals=cfg.abc.n_proposals,
        n_accept=cfg.abc.n_accept,
        k=cfg.abc.k,
        prior=prior,
        dim=d,
    )
    fed = FederationRunConfig(abc=abc_cfg, sites=descriptors, seed=cfg.seed)
    site_rows = [s.published_minority for s in participating]
    pooled_train = LabeledBatch(
        np.vstack([s.train.x for s in sites]),
        np.concatenate([s.train.y for s in sites]),
    )
    pooled_test = LabeledBatch(
        np.vstack([s.test.x for s in sites]),
        np.concatenate([s.test.y for s in sites]),
    )
    return AugmentationPrep(
        fed_config=fed,
        sites=sites,
        participating=participating,
        site_rows=site_rows,
        pooled_train=pooled_train,
        pooled_test=pooled_test,
        pooled_enc=None,
    )


# ---------------------------------------------------------------------------
# protocol execution over the configured transport
# ---------------------------------------------------------------------------


def _run_protocol(
    fed_config: FederationRunConfig,
    site_rows: list[np.ndarray],
    transport: TransportSpec,
) -> Posterior:
    if transport.kind == "inprocess":
        return run_federated_inprocess(fed_config, site_rows)
    if transport.kind != "socket":
        raise FedAbcError(f"unknown transport kind {transport.kind!r}")
    host, port = transport.host_port()
    listener = SiteListener(host, port)
    errors: list[BaseException] = []

    def dial(descriptor, rows):
        try:
            channel = connect_socket(host, listener.port)
            serve_site(descriptor, rows, channel)
        except BaseException as exc:  # noqa: BLE001
            errors.append(exc)

    threads = [
        threading.Thread(target=dial, args=(desc, rows), daemon=True)
        for desc, rows in zip(fed_config.sites, site_rows)
    ]
    for t in threads:
        t.start()
    transports = listener.accept_sites(len(fed_config.sites))
    posterior = coordinate(fed_config, transports)
    for t in threads:
        t.join(timeout=60.0)
    for t_ in transports:
        t_.close()
    if errors:
        raise errors[0]
    return posterior


def run_posterior_external(
    fed_config: FederationRunConfig, listen_address: str
) -> Posterior:
    """Coordinator half of a genuinely distributed run: wait for external sites."""
    host, _, port = listen_address.rpartition(":")
    listener = SiteListener(host or "127.0.0.1", int(port))
    print(f"listening on {host or '127.0.0.1'}:{listener.port} "
          f"for {len(fed_config.sites)} site(s)")
    transports = listener.accept_sites(len(fed_config.sites))
    try:
        return coordinate(fed_config, transports)
    finally:
        for t in transports:
            t.close()


# ---------------------------------------------------------------------------
# downstream evaluation
# ---------------------------------------------------------------------------


def _greedy_match(est_means: np.ndarray, true_means: np.ndarray) -> dict[int, int]:
    """Map true component index -> estimated index, each used exactly once."""
    dists = np.linalg.norm(est_means[:, None, :] - true_means[None, :, :], axis=2)
    work = dists.copy()
    assignment: dict[int, int] = {}
    for _ in range(true_means.shape[0]):
        i, j = np.unravel_index(np.argmin(work), work.shape)
        assignment[int(j)] = int(i)
        work[i, :] = np.inf
        work[:, j] = np.inf
    return assignment


def _fit_or_degenerate(train_enc, train_y, eval_spec: EvalSpec, rng: RngStream):
    """Fit a logistic model; single-class training data yields the constant
    majority predictor (score 0 for the minority class)."""
    try:
        model = fit_logistic(
            train_enc, train_y, epochs=eval_spec.epochs,
            learning_rate=eval_spec.learning_rate, rng=rng,
        )
    except SingleClassData:
        return None
    return model


def _condition_report(
    model, train_enc, train_y, test_enc, test_y
) -> tuple[float, float, float]:
    """(auc, f1, cutoff) on the test half; cutoff selected on training scores."""
    if model is None:
        scores = np.zeros(test_enc.shape[0])
        cutoff = 0.5
    else:
        scores = model.scores(test_enc)
        cutoff = select_cutoff(model.scores(train_enc), train_y)
    return auc(scores, test_y), f1_at_cutoff(scores, test_y, cutoff), cutoff


def _augment_rows(params, n_needed: int, rng: RngStream) -> np.ndarray:
    rows, _ = gmm_sample(params, n_needed, rng)
    return rows


# ---------------------------------------------------------------------------
# scenario entry points
# ---------------------------------------------------------------------------


def run_trimodal(cfg: ExperimentConfig, out_dir, listen: str | None = None) -> dict:
    t_start = time.perf_counter()
    prep = prepare_trimodal(cfg)
    t_fed = time.perf_counter()
    if listen is not None:
        posterior = run_posterior_external(prep.fed_config, listen)
    else:
        posterior = _run_protocol(prep.fed_config, prep.site_rows, cfg.transport)
    fed_seconds = time.perf_counter() - t_fed
    estimate = mixture_mode_estimate(posterior)
    true = prep.true_params
    assignment = _greedy_match(estimate.means, true.means)
    rows = []
    for comp in range(true.k):
        est_idx = assignment[comp]
        mu_err = float(np.linalg.norm(estimate.means[est_idx] - true.means[comp]))
        pi_err = float(abs(estimate.weights[est_idx] - true.weights[comp]))
        rows.append(
            {
                "component": comp,
                "true_mu_1": true.means[comp][0],
                "true_mu_2": true.means[comp][1],
                "est_mu_1": estimate.means[est_idx][0],
                "est_mu_2": estimate.means[est_idx][1],
                "mu_error": mu_err,
                "est_pi": estimate.weights[est_idx],
                "pi_error": pi_err,
                "epsilon": posterior.epsilon,
            }
        )
    report = {
        "rows": rows,
        "epsilon": posterior.epsilon,
        "max_mu_error": max(r["mu_error"] for r in rows),
        "max_pi_error": max(r["pi_error"] for r in rows),
        "assignment": assignment,
        "seconds": time.perf_counter() - t_start,
        "federation_seconds": fed_seconds,
    }
    _write_outputs(
        cfg,
        out_dir,
        posterior,
        metrics_rows=rows,
        metrics_columns=[
            "component",
            "true_mu_1",
            "true_mu_2",
            "est_mu_1",
            "est_mu_2",
            "mu_error",
            "est_pi",
            "pi_error",
            "epsilon",
        ],
        manifest_extra={
            "timings": {
                "total_seconds": report["seconds"],
                "federation_seconds": fed_seconds,
            },
            "parameters": {"n_per_component": cfg.data.n_per_component},
        },
    )
    return report


def _augmentation_scenario(
    cfg: ExperimentConfig, out_dir, listen: str | None = None
) -> dict:
    t_start = time.perf_counter()
    root = RngStream(cfg.seed)
    prep = prepare_augmentation(cfg)
    t_fed = time.perf_counter()
    if listen is not None:
        posterior = run_posterior_external(prep.fed_config, listen)
    else:
        posterior = _run_protocol(prep.fed_config, prep.site_rows, cfg.transport)
    fed_seconds = time.perf_counter() - t_fed
    # The mode estimate de-noises the accepted set by keeping only generating
    # components, which tracks the pooled minority cloud far better than the
    # whole-draw average; synthetic rows are drawn from it.
    params = mixture_mode_estimate(posterior)

    eval_rng = root.split(_LANE_EVAL)
    aug_rng = root.split(_LANE_AUGMENT)
    reports: list[dict] = []
    scenario = cfg.scenario

    if scenario in ("imbalance", "custom"):
        # pooled upper bound: one encoder over all raw data
        pooled = SiteData(site_id=-1, train=prep.pooled_train, test=prep.pooled_test)
        pooled_cfg_root = root.split(_LANE_POOLED)
        summary = cfg.summary
        if summary.identity:
            enc_train = pooled.train.x
            enc_test = pooled.test.x
        else:
            input_dim = pooled.train.x.shape[1]
            hidden = summary.hidden_dims if summary.hidden_dims else [max(input_dim, 8)]
            model = init_model(
                [input_dim, *hidden, summary.latent_dim], summary.noise_alpha,
                pooled_cfg_root.split(0),
            )
            model = train(
                model, pooled.train, summary.epochs, summary.learning_rate,
                summary.batch_size, pooled_cfg_root.split(1),
            )
            enc_train = encode(model, pooled.train.x)
            enc_test = encode(model, pooled.test.x)
        clf = _fit_or_degenerate(enc_train, pooled.train.y, cfg.eval, eval_rng.split(0))
        a, f1, cut = _condition_report(clf, enc_train, pooled.train.y, enc_test, pooled.test.y)
        reports.append(
            {
                "scenario": scenario,
                "site": "all",
                "condition": "all",
                "auc": a,
                "auc_sd": "",
                "f1": f1,
                "cutoff": cut,
                "n_pos": int(np.sum(pooled.test.y == 1)),
                "n_neg": int(np.sum(pooled.test.y == 0)),
            }
        )

    for site in prep.sites:
        clf = _fit_or_degenerate(
            site.enc_train, site.train.y, cfg.eval, eval_rng.split(1 + site.site_id)
        )
        a, f1, cut = _condition_report(
            clf, site.enc_train, site.train.y, site.enc_test, site.test.y
        )
        reports.append(
            {
                "scenario": scenario,
                "site": str(site.site_id),
                "condition": "raw",
                "auc": a,
                "auc_sd": "",
                "f1": f1,
                "cutoff": cut,
                "n_pos": int(np.sum(site.test.y == 1)),
                "n_neg": int(np.sum(site.test.y == 0)),
            }
        )

    repeats = max(1, cfg.data.repeats)
    for site in prep.sites:
        n_majority = int(np.sum(site.train.y == 0))
        n_minority = int(np.sum(site.train.y == 1))
        n_needed = max(n_majority - n_minority, 0)
        aucs, f1s, cuts = [], [], []
        for rep in range(repeats):
            rep_rng = aug_rng.split(rep).split(site.site_id)
            if n_needed:
                synth = _augment_rows(params, n_needed, rep_rng)
                aug_x = np.vstack([site.enc_train, synth])
                aug_y = np.concatenate([site.train.y, np.ones(n_needed)])
            else:
                aug_x, aug_y = site.enc_train, site.train.y
            clf = _fit_or_degenerate(aug_x, aug_y, cfg.eval, rep_rng.split(10**6))
            a, f1, cut = _condition_report(clf, aug_x, aug_y, site.enc_test, site.test.y)
            aucs.append(a)
            f1s.append(f1)
            cuts.append(cut)
        reports.append(
            {
                "scenario": scenario,
                "site": str(site.site_id),
                "condition": "augmented",
                "auc": float(np.mean(aucs)),
                "auc_sd": float(np.std(aucs)),
                "f1": float(np.mean(f1s)),
                "cutoff": float(np.mean(cuts)),
                "n_pos": int(np.sum(site.test.y == 1)),
                "n_neg": int(np.sum(site.test.y == 0)),
            }
        )

    total_seconds = time.perf_counter() - t_start
    manifest_params = {
        "repeats": repeats,
        "class_ratio": f"{cfg.data.n_majority}:{cfg.data.n_minority}",
    }
    if scenario == "scarce":
        manifest_params["retention"] = cfg.data.retention
        manifest_params["n_affected"] = cfg.data.n_affected
        manifest_params["participating_sites"] = [s.site_id for s in prep.participating]
    _write_outputs(
        cfg,
        out_dir,
        posterior,
        metrics_rows=reports,
        metrics_columns=None,  # EvalReport schema
        manifest_extra={
            "timings": {
                "total_seconds": total_seconds,
                "federation_seconds": fed_seconds,
            },
            "parameters": manifest_params,
        },
    )
    return {"reports": reports, "posterior": posterior, "seconds": total_seconds}


def run_imbalance(cfg: ExperimentConfig, out_dir, listen: str | None = None) -> dict:
    return _augmentation_scenario(cfg, out_dir, listen)


def run_scarce(cfg: ExperimentConfig, out_dir, listen: str | None = None) -> dict:
    return _augmentation_scenario(cfg, out_dir, listen)


def run_scenario(cfg: ExperimentConfig, out_dir, listen: str | None = None) -> dict:
    if cfg.scenario == "trimodal":
        return run_trimodal(cfg, out_dir, listen)
    return _augmentation_scenario(cfg, out_dir, listen)


def run_site_process(cfg: ExperimentConfig, site_id: int, address: str) -> None:
    """Standalone site role: derive local data, connect, and serve."""
    host, _, port = address.rpartition(":")
    if cfg.scenario == "trimodal":
        prep = prepare_trimodal(cfg)
        fed, rows = prep.fed_config, prep.site_rows
    else:
        aug = prepare_augmentation(cfg)
        fed, rows = aug.fed_config, aug.site_rows
    for descriptor, site_rows in zip(fed.sites, rows):
        if descriptor.site_id == site_id:
            channel = connect_socket(host or "127.0.0.1", int(port))
            serve_site(descriptor, site_rows, channel)
            return
    raise FedAbcError(f"site {site_id} does not participate in this run")


# ---------------------------------------------------------------------------
# output files
# ---------------------------------------------------------------------------


def _version_string() -> str:
    try:
        described = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True,
            text=True,
            timeout=5,
            cwd=Path(__file__).parent,
        )
        if described.returncode == 0 and described.stdout.strip():
            return f"{__version__}+g{described.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _write_outputs(
    cfg: ExperimentConfig,
    out_dir,
    posterior: Posterior,
    metrics_rows: list[dict],
    metrics_columns: list[str] | None,
    manifest_extra: dict,
) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "config.json", "w") as handle:
        json.dump(cfg.to_dict(), handle, indent=2)
        handle.write("\n")
    with open(out / "posterior.json", "w") as handle:
        json.dump(posterior.to_dict(), handle)
        handle.write("\n")
    if metrics_columns is None:
        write_report_csv(out / "metrics.csv", metrics_rows)
    else:
        import csv

        with open(out / "metrics.csv", "w", newline="") as handle:
            writer = csv.DictWriter(handle, fieldnames=metrics_columns)
            writer.writeheader()
            for row in metrics_rows:
                writer.writerow({k: row.get(k, "") for k in metrics_columns})
    manifest = {"version": _version_string(), "scenario": cfg.scenario, "seed": cfg.seed}
    manifest.update(manifest_extra)
    with open(out / "manifest.json", "w") as handle:
        json.dump(manifest, handle, indent=2)
        handle.write("\n")
