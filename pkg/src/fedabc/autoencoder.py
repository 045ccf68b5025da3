"""Supervised autoencoder that produces low-dimensional summary statistics.

The network has three heads sharing one latent code:

* encoder ``q``: dense layers D -> ... -> d, tanh hidden, linear output;
* decoder ``f``: mirrored dense layers d -> ... -> D, tanh hidden, linear output;
* classifier ``g``: a single logistic unit on the latent code.

Training maximizes, per sample, the sum of a Gaussian reconstruction term, a
Bernoulli classification term, and a KL penalty against a standard-normal
latent prior. With latent noise z = q(x) + e, e ~ N(0, noise_alpha * I), the
negated objective minimized here is

    0.5 * ||x - f(z)||^2  -  [y log g(z) + (1 - y) log(1 - g(z))]
      + 0.5 * (||q(x)||^2 + d * (noise_alpha - 1 - log noise_alpha))

summed over the batch. Gradients are exact backpropagation of this loss; the
noise term is drawn once per sample per evaluation, and a loss/grad pair
evaluated from equal stream states shares the same draw.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NumericalOverflow
from .linalg import as_matrix
from .rng import RngStream

_PROB_CLAMP = 1e-12


@dataclass
class LabeledBatch:
    """Feature matrix (n, D) with binary labels (n,)."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.x = as_matrix(self.x, "x")
        self.y = np.asarray(self.y, dtype=np.float64).ravel()
        if self.x.shape[0] < 1:
            raise ValueError("batch must contain at least one sample")
        if self.y.shape[0] != self.x.shape[0]:
            raise DimensionMismatch(
                f"{self.x.shape[0]} rows but {self.y.shape[0]} labels"
            )
        if not np.all(np.isin(self.y, (0.0, 1.0))):
            raise ValueError("labels must be binary")

    def __len__(self) -> int:
        return self.x.shape[0]

    def subset(self, idx) -> "LabeledBatch":
        return LabeledBatch(self.x[idx], self.y[idx])


@dataclass
class SupervisedAutoencoder:
    """Weight stacks for encoder/decoder/classifier plus the latent noise variance."""

    enc_weights: list[np.ndarray]
    enc_biases: list[np.ndarray]
    dec_weights: list[np.ndarray]
    dec_biases: list[np.ndarray]
    clf_weights: np.ndarray
    clf_bias: float
    noise_alpha: float

    def __post_init__(self):
        if self.noise_alpha <= 0.0:
            raise ValueError("noise_alpha must be positive")
        for w in (*self.enc_weights, *self.dec_weights, self.clf_weights):
            if not np.all(np.isfinite(w)):
                raise ValueError("non-finite weight")
        if self.latent_dim != self.dec_weights[0].shape[1]:
            raise DimensionMismatch("decoder input width must equal encoder output width")
        if self.clf_weights.shape != (self.latent_dim,):
            raise DimensionMismatch("classifier width must equal encoder output width")

    @property
    def input_dim(self) -> int:
        return self.enc_weights[0].shape[1]

    @property
    def latent_dim(self) -> int:
        return self.enc_weights[-1].shape[0]

    def copy(self) -> "SupervisedAutoencoder":
        return SupervisedAutoencoder(
            enc_weights=[w.copy() for w in self.enc_weights],
            enc_biases=[b.copy() for b in self.enc_biases],
            dec_weights=[w.copy() for w in self.dec_weights],
            dec_biases=[b.copy() for b in self.dec_biases],
            clf_weights=self.clf_weights.copy(),
            clf_bias=float(self.clf_bias),
            noise_alpha=float(self.noise_alpha),
        )

    def to_dict(self) -> dict:
        return {
            "enc_dims": [self.input_dim] + [w.shape[0] for w in self.enc_weights],
            "enc_weights": [w.tolist() for w in self.enc_weights],
            "enc_biases": [b.tolist() for b in self.enc_biases],
            "dec_weights": [w.tolist() for w in self.dec_weights],
            "dec_biases": [b.tolist() for b in self.dec_biases],
            "clf_weights": self.clf_weights.tolist(),
            "clf_bias": self.clf_bias,
            "noise_alpha": self.noise_alpha,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SupervisedAutoencoder":
        return cls(
            enc_weights=[np.asarray(w, dtype=np.float64) for w in doc["enc_weights"]],
            enc_biases=[np.asarray(b, dtype=np.float64) for b in doc["enc_biases"]],
            dec_weights=[np.asarray(w, dtype=np.float64) for w in doc["dec_weights"]],
            dec_biases=[np.asarray(b, dtype=np.float64) for b in doc["dec_biases"]],
            clf_weights=np.asarray(doc["clf_weights"], dtype=np.float64),
            clf_bias=float(doc["clf_bias"]),
            noise_alpha=float(doc["noise_alpha"]),
        )


@dataclass
class ModelGradients:
    """Partial derivatives of the loss, mirroring the model's weight stacks."""

    enc_weights: list[np.ndarray]
    enc_biases: list[np.ndarray]
    dec_weights: list[np.ndarray]
    dec_biases: list[np.ndarray]
    clf_weights: np.ndarray
    clf_bias: float


def init_model(enc_dims: list[int], noise_alpha: float, rng: RngStream) -> SupervisedAutoencoder:
    """Fresh model with the given encoder widths (input first, latent last).

    The decoder mirrors the encoder. Weights are uniform on
    [-1/sqrt(fan_in), 1/sqrt(fan_in)]; biases start at zero.
    """
    if len(enc_dims) < 2:
        raise ValueError("need at least input and latent widths")
    dec_dims = list(reversed(enc_dims))

    def dense_stack(dims):
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            bound = 1.0 / math.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, (fan_out, fan_in)))
            biases.append(np.zeros(fan_out))
        return weights, biases

    enc_w, enc_b = dense_stack(enc_dims)
    dec_w, dec_b = dense_stack(dec_dims)
    d = enc_dims[-1]
    clf_w = rng.uniform(-1.0 / math.sqrt(d), 1.0 / math.sqrt(d), d)
    return SupervisedAutoencoder(
        enc_weights=enc_w,
        enc_biases=enc_b,
        dec_weights=dec_w,
        dec_biases=dec_b,
        clf_weights=clf_w,
        clf_bias=0.0,
        noise_alpha=float(noise_alpha),
    )


def _forward_stack(weights, biases, x):
    """Apply a dense stack (tanh hidden, linear last); returns all layer outputs."""
    outputs = [x]
    h = x
    last = len(weights) - 1
    for i, (w, b) in enumerate(zip(weights, biases)):
        a = h @ w.T + b
        h = a if i == last else np.tanh(a)
        outputs.append(h)
    return outputs


def _backward_stack(weights, outputs, delta_out):
    """Backpropagate through a dense stack given d(loss)/d(stack output).

    Returns (weight grads, bias grads, d(loss)/d(stack input)).
    """
    grads_w = [None] * len(weights)
    grads_b = [None] * len(weights)
    delta = delta_out
    for i in range(len(weights) - 1, -1, -1):
        grads_w[i] = delta.T @ outputs[i]
        grads_b[i] = delta.sum(axis=0)
        upstream = delta @ weights[i]
        if i > 0:
            upstream = upstream * (1.0 - outputs[i] ** 2)
        delta = upstream
    return grads_w, grads_b, delta


def encode(model: SupervisedAutoencoder, x) -> np.ndarray:
    """Deterministic latent codes, one row per input row."""
    x = as_matrix(x, "x")
    if x.shape[1] != model.input_dim:
        raise DimensionMismatch(f"expected {model.input_dim} columns, got {x.shape[1]}")
    return _forward_stack(model.enc_weights, model.enc_biases, x)[-1]


def encode_noisy(model: SupervisedAutoencoder, x, rng: RngStream) -> np.ndarray:
    """encode(x) plus elementwise N(0, noise_alpha) noise."""
    codes = encode(model, x)
    return codes + math.sqrt(model.noise_alpha) * rng.standard_normal(codes.shape)


def decode(model: SupervisedAutoencoder, z) -> np.ndarray:
    """Deterministic reconstruction from latent codes."""
    z = as_matrix(z, "z")
    if z.shape[1] != model.latent_dim:
        raise DimensionMismatch(f"expected {model.latent_dim} columns, got {z.shape[1]}")
    return _forward_stack(model.dec_weights, model.dec_biases, z)[-1]


def _sigmoid(logits: np.ndarray) -> np.ndarray:
    out = np.empty_like(logits)
    pos = logits >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-logits[pos]))
    enl = np.exp(logits[~pos])
    out[~pos] = enl / (1.0 + enl)
    return out


def classify(model: SupervisedAutoencoder, z) -> np.ndarray:
    """Per-row probability from the logistic head."""
    z = as_matrix(z, "z")
    if z.shape[1] != model.latent_dim:
        raise DimensionMismatch(f"expected {model.latent_dim} columns, got {z.shape[1]}")
    return _sigmoid(z @ model.clf_weights + model.clf_bias)


def _draw_noise(model, n, rng: RngStream | None) -> np.ndarray:
    if rng is None:
        return np.zeros((n, model.latent_dim))
    return math.sqrt(model.noise_alpha) * rng.standard_normal((n, model.latent_dim))


def _evaluate(model: SupervisedAutoencoder, batch: LabeledBatch, noise, want_grad: bool):
    x, y = batch.x, batch.y
    n, d = x.shape[0], model.latent_dim

    enc_out = _forward_stack(model.enc_weights, model.enc_biases, x)
    codes = enc_out[-1]
    z = codes + noise
    dec_out = _forward_stack(model.dec_weights, model.dec_biases, z)
    recon = dec_out[-1]
    probs = _sigmoid(z @ model.clf_weights + model.clf_bias)
    clamped = np.clip(probs, _PROB_CLAMP, 1.0 - _PROB_CLAMP)

    alpha = model.noise_alpha
    recon_term = 0.5 * float(np.sum((x - recon) ** 2))
    clf_term = -float(np.sum(y * np.log(clamped) + (1.0 - y) * np.log(1.0 - clamped)))
    reg_term = 0.5 * (float(np.sum(codes**2)) + n * d * (alpha - 1.0 - math.log(alpha)))
    loss_value = recon_term + clf_term + reg_term
    if not math.isfinite(loss_value):
        raise NumericalOverflow("loss is not finite")
    if not want_grad:
        return loss_value, None

    d_recon = recon - x
    dec_gw, dec_gb, dz_dec = _backward_stack(model.dec_weights, dec_out, d_recon)
    d_logit = probs - y
    clf_gw = z.T @ d_logit
    clf_gb = float(np.sum(d_logit))
    dz = dz_dec + np.outer(d_logit, model.clf_weights)
    d_codes = dz + codes
    enc_gw, enc_gb, _ = _backward_stack(model.enc_weights, enc_out, d_codes)
    grads = ModelGradients(
        enc_weights=enc_gw,
        enc_biases=enc_gb,
        dec_weights=dec_gw,
        dec_biases=dec_gb,
        clf_weights=clf_gw,
        clf_bias=clf_gb,
    )
    return loss_value, grads


def loss(model: SupervisedAutoencoder, batch: LabeledBatch, rng: RngStream | None) -> float:
    """Negated training objective over the batch, one noise draw per sample.

    Passing ``rng=None`` suppresses the noise draw (the analytic
    noise-variance term stays), which is the evaluation mode used to monitor
    training.
    """
    return _evaluate(model, batch, _draw_noise(model, len(batch), rng), want_grad=False)[0]


def grad(model: SupervisedAutoencoder, batch: LabeledBatch, rng: RngStream | None) -> ModelGradients:
    """Exact gradients of :func:`loss`; shares the draw schedule with it."""
    return _evaluate(model, batch, _draw_noise(model, len(batch), rng), want_grad=True)[1]


def loss_and_grad(
    model: SupervisedAutoencoder, batch: LabeledBatch, rng: RngStream | None
) -> tuple[float, ModelGradients]:
    """Loss and gradients from a single shared noise draw."""
    return _evaluate(model, batch, _draw_noise(model, len(batch), rng), want_grad=True)


def train(
    model: SupervisedAutoencoder,
    data: LabeledBatch,
    epochs: int,
    learning_rate: float,
    batch_size: int,
    rng: RngStream,
) -> SupervisedAutoencoder:
    """Mini-batch gradient descent on :func:`loss`; returns the updated model.

    Rows are reshuffled every epoch from the stream, so a fixed seed gives a
    fixed trajectory. The input model is not mutated.
    """
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    if learning_rate < 0.0:
        raise ValueError("learning_rate must be nonnegative")
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    out = model.copy()
    n = len(data)
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            g = grad(out, data.subset(idx), rng)
            for w, gw in zip(out.enc_weights, g.enc_weights):
                w -= learning_rate * gw
            for b, gb in zip(out.enc_biases, g.enc_biases):
                b -= learning_rate * gb
            for w, gw in zip(out.dec_weights, g.dec_weights):
                w -= learning_rate * gw
            for b, gb in zip(out.dec_biases, g.dec_biases):
                b -= learning_rate * gb
            out.clf_weights -= learning_rate * g.clf_weights
            out.clf_bias = float(out.clf_bias - learning_rate * g.clf_bias)
    return out


@dataclass
class SummaryConfig:
    """How a site turns raw labeled data into published summary rows.

    ``identity`` skips the autoencoder and publishes features as-is (used when
    data is already low-dimensional and unlabeled-friendly). Otherwise an
    autoencoder with the given widths is trained locally and rows are encoded
    once, optionally with the calibration noise applied at publication.
    """

    latent_dim: int
    identity: bool = False
    hidden_dims: list[int] = field(default_factory=list)
    epochs: int = 100
    learning_rate: float = 1e-2
    batch_size: int = 32
    noise_alpha: float = 0.1
    publish_noisy: bool = True


def prepare_summary(
    data: LabeledBatch, cfg: SummaryConfig, rng: RngStream
) -> tuple[np.ndarray, SupervisedAutoencoder | None]:
    """Train the local summarizer and freeze published rows for federation."""
    if cfg.identity:
        if data.x.shape[1] != cfg.latent_dim:
            raise DimensionMismatch(
                f"identity summary needs {cfg.latent_dim}-dim data, got {data.x.shape[1]}"
            )
        return data.x.copy(), None
    input_dim = data.x.shape[1]
    hidden = cfg.hidden_dims if cfg.hidden_dims else [max(input_dim, 8)]
    dims = [input_dim, *hidden, cfg.latent_dim]
    model = init_model(dims, cfg.noise_alpha, rng.split(0))
    model = train(model, data, cfg.epochs, cfg.learning_rate, cfg.batch_size, rng.split(1))
    if cfg.publish_noisy:
        published = encode_noisy(model, data.x, rng.split(2))
    else:
        published = encode(model, data.x)
    return published, model
