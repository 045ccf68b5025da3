"""Downstream evaluation: logistic classifier on summary space, AUC, F1, cut-off."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import SingleClassData
from .linalg import as_matrix, as_vector
from .rng import RngStream


def _sigmoid(logits: np.ndarray) -> np.ndarray:
    out = np.empty_like(logits)
    pos = logits >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-logits[pos]))
    enl = np.exp(logits[~pos])
    out[~pos] = enl / (1.0 + enl)
    return out


@dataclass
class LogisticModel:
    weights: np.ndarray
    bias: float

    def scores(self, data) -> np.ndarray:
        data = as_matrix(data, "data")
        return _sigmoid(data @ self.weights + self.bias)


@dataclass
class EvalReport:
    auc: float
    f1: float
    cutoff: float
    n_pos: int
    n_neg: int
    auc_sd: float | None = None


def _check_two_classes(labels: np.ndarray) -> None:
    if not (np.any(labels == 1) and np.any(labels == 0)):
        raise SingleClassData("need both classes present")


def fit_logistic(
    data,
    labels,
    epochs: int = 300,
    learning_rate: float = 0.5,
    rng: RngStream | None = None,
) -> LogisticModel:
    """Full-batch gradient descent on mean binary cross-entropy.

    Initialization comes from the stream (zeros when rng is None), so a fixed
    seed fixes the fit.
    """
    data = as_matrix(data, "data")
    labels = np.asarray(labels, dtype=np.float64).ravel()
    _check_two_classes(labels)
    d = data.shape[1]
    if rng is None:
        weights = np.zeros(d)
        bias = 0.0
    else:
        bound = 1.0 / np.sqrt(d)
        weights = rng.uniform(-bound, bound, d)
        bias = float(rng.uniform(-bound, bound))
    n = data.shape[0]
    for _ in range(epochs):
        probs = _sigmoid(data @ weights + bias)
        residual = probs - labels
        weights = weights - learning_rate * (data.T @ residual) / n
        bias = bias - learning_rate * float(np.sum(residual)) / n
    return LogisticModel(weights=weights, bias=bias)


def auc(scores, labels) -> float:
    """Probability a random positive outranks a random negative; ties count half."""
    scores = as_vector(np.asarray(scores, dtype=np.float64), "scores")
    labels = np.asarray(labels, dtype=np.float64).ravel()
    _check_two_classes(labels)
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(len(scores))
    sorted_scores = scores[order]
    # average ranks within tie groups (1-based)
    i = 0
    while i < len(sorted_scores):
        j = i
        while j + 1 < len(sorted_scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    rank_sum = float(np.sum(ranks[labels == 1]))
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def f1_at_cutoff(scores, labels, cutoff: float) -> float:
    """F1 of the rule score >= cutoff; zero when precision + recall is zero."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels, dtype=np.float64).ravel()
    _check_two_classes(labels)
    predicted = scores >= cutoff
    tp = int(np.sum(predicted & (labels == 1)))
    fp = int(np.sum(predicted & (labels == 0)))
    fn = int(np.sum(~predicted & (labels == 1)))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def select_cutoff(scores, labels) -> float:
    """Midpoint of sorted unique scores that maximizes F1; ties pick the smallest."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels, dtype=np.float64).ravel()
    _check_two_classes(labels)
    unique = np.unique(scores)
    if unique.size == 1:
        candidates = [float(unique[0])]
    else:
        candidates = [0.5 * (a + b) for a, b in zip(unique[:-1], unique[1:])]
    best_cut = candidates[0]
    best_f1 = f1_at_cutoff(scores, labels, best_cut)
    for cut in candidates[1:]:
        value = f1_at_cutoff(scores, labels, cut)
        if value > best_f1:
            best_f1, best_cut = value, cut
    return float(best_cut)


REPORT_COLUMNS = [
    "scenario",
    "site",
    "condition",
    "auc",
    "auc_sd",
    "f1",
    "cutoff",
    "n_pos",
    "n_neg",
]


def write_report_csv(path, rows: list[dict]) -> None:
    """One CSV row per (scenario, site, condition); RFC-4180 quoting."""
    with open(path, "w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=REPORT_COLUMNS, quoting=csv.QUOTE_MINIMAL)
        writer.writeheader()
        for row in rows:
            writer.writerow({col: row.get(col, "") for col in REPORT_COLUMNS})
