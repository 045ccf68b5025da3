"""Synthetic data generators and CSV ingestion for the experiment scenarios."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import (
    MissingColumn,
    NonBinaryLabel,
    NonFiniteFeature,
    ParseError,
)
from .gmm import GmmParams
from .rng import RngStream

TRIMODAL_MEANS = np.array([[-9.0, 3.0], [0.0, -9.0], [8.0, 3.0]])


@dataclass
class CsvDataset:
    """Rectangular feature table with one binary label column."""

    feature_names: list[str]
    label_name: str
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.x.ndim != 2 or self.x.shape[1] != len(self.feature_names):
            raise ParseError("feature matrix does not match header")
        if self.y.shape[0] != self.x.shape[0]:
            raise ParseError("label count does not match row count")
        if not np.all(np.isfinite(self.x)):
            raise NonFiniteFeature("features contain non-finite values")
        if not np.all(np.isin(self.y, (0, 1))):
            raise NonBinaryLabel("labels must be 0 or 1")


def ingest_csv(path, label_column: str) -> CsvDataset:
    """Read and validate a labeled CSV file."""
    try:
        with open(path, newline="") as handle:
            reader = csv.reader(handle)
            rows = list(reader)
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise ParseError(f"{path} is empty")
    header = rows[0]
    if label_column not in header:
        raise MissingColumn(f"no column named {label_column!r} in {header}")
    label_idx = header.index(label_column)
    feature_names = [name for i, name in enumerate(header) if i != label_idx]
    features, labels = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ParseError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            values = [float(v) for v in row]
        except ValueError as exc:
            raise ParseError(f"line {lineno}: {exc}") from exc
        label = values.pop(label_idx)
        if label not in (0.0, 1.0):
            raise NonBinaryLabel(f"line {lineno}: label {label} is not binary")
        if not all(np.isfinite(values)):
            raise NonFiniteFeature(f"line {lineno}: non-finite feature")
        features.append(values)
        labels.append(int(label))
    return CsvDataset(
        feature_names=feature_names,
        label_name=label_column,
        x=np.array(features, dtype=np.float64).reshape(len(features), len(feature_names)),
        y=np.array(labels, dtype=np.int64),
    )


def write_csv(dataset: CsvDataset, path) -> None:
    """Inverse of :func:`ingest_csv` (label column last)."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(dataset.feature_names + [dataset.label_name])
        for row, label in zip(dataset.x, dataset.y):
            writer.writerow([repr(float(v)) for v in row] + [int(label)])


@dataclass
class TrimodalData:
    """Two-dimensional tri-modal sample with per-row component ids."""

    x: np.ndarray
    components: np.ndarray
    true_params: GmmParams


def generate_trimodal(n_per_component: int, rng: RngStream) -> TrimodalData:
    """Three equally weighted unit-covariance Gaussians, n rows per component.

    Rows are grouped by component (block order), which is also the per-site
    split used by the scenario: each site holds one mode.
    """
    if n_per_component < 1:
        raise ValueError("n_per_component must be >= 1")
    k = TRIMODAL_MEANS.shape[0]
    rows = np.empty((k * n_per_component, 2))
    components = np.repeat(np.arange(k), n_per_component)
    for j in range(k):
        block = rng.standard_normal((n_per_component, 2)) + TRIMODAL_MEANS[j]
        rows[j * n_per_component : (j + 1) * n_per_component] = block
    true_params = GmmParams(
        weights=np.full(k, 1.0 / k),
        means=TRIMODAL_MEANS.copy(),
        covs=np.stack([np.eye(2)] * k),
    )
    return TrimodalData(x=rows, components=components, true_params=true_params)


@dataclass
class TwoClassSpec:
    """Shape of one site's two-class Gaussian sample in raw feature space.

    Class 1 is the minority: its mean sits ``class_sep`` away from class 0
    along the first raw axis. ``site_shift`` displaces both classes, modeling
    a site-specific bias.
    """

    n_majority: int
    n_minority: int
    dim: int
    class_sep: float
    site_shift: np.ndarray


def generate_two_class_site(spec: TwoClassSpec, rng: RngStream) -> tuple[np.ndarray, np.ndarray]:
    """Rows and labels for one site; rows are shuffled so classes interleave."""
    base0 = np.zeros(spec.dim)
    base1 = np.zeros(spec.dim)
    base1[0] = spec.class_sep
    rows = np.vstack(
        [
            rng.standard_normal((spec.n_majority, spec.dim)) + base0 + spec.site_shift,
            rng.standard_normal((spec.n_minority, spec.dim)) + base1 + spec.site_shift,
        ]
    )
    labels = np.concatenate([np.zeros(spec.n_majority), np.ones(spec.n_minority)]).astype(np.int64)
    order = rng.permutation(rows.shape[0])
    return rows[order], labels[order]


def stratified_split(
    labels: np.ndarray, test_fraction: float, rng: RngStream
) -> tuple[np.ndarray, np.ndarray]:
    """Train/test index split preserving class proportions.

    Each class present contributes at least one test row (so metrics stay
    defined) and keeps the remainder for training.
    """
    labels = np.asarray(labels)
    train_idx, test_idx = [], []
    for value in np.unique(labels):
        members = np.flatnonzero(labels == value)
        members = members[rng.permutation(members.size)]
        n_test = max(1, int(round(test_fraction * members.size)))
        n_test = min(n_test, members.size)
        test_idx.append(members[:n_test])
        train_idx.append(members[n_test:])
    train = np.sort(np.concatenate(train_idx))
    test = np.sort(np.concatenate(test_idx))
    return train, test
