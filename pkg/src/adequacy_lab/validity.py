"""Autoencoder-based input validity oracle.

A small mirrored MLP autoencoder is trained on the training split; its
per-input mean squared reconstruction error is the validity score.  A
Gamma distribution is fitted to the training reconstruction errors by
maximum likelihood, and the validity threshold is the Gamma quantile at
1 - epsilon for a configured false-alarm rate epsilon (default 0.0001).
Inputs whose reconstruction error exceeds the threshold are flagged
invalid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    ConvergenceError,
    DimensionMismatchError,
    DivergenceError,
    DomainError,
    EmptyInputError,
)
from .numkit import digamma, reg_lower_incomplete_gamma, trigamma
from .refmodel import LabeledDataset, adam_step


@dataclass
class AutoencoderModel:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    bottleneck_dim: int
    epochs: int
    learning_rate: float
    seed: int


def default_bottleneck(input_dim: int) -> int:
    return max(2, input_dim // 4)


def _init_autoencoder(input_dim: int, bottleneck_dim: int,
                      seed: int) -> AutoencoderModel:
    rng = np.random.default_rng(seed)
    sizes = [input_dim, bottleneck_dim, input_dim]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return AutoencoderModel(weights, biases, bottleneck_dim, 0, 0.0, seed)


def _ae_forward(model: AutoencoderModel, x: np.ndarray):
    """Encoder ReLU at the bottleneck, linear decoder output."""
    z1 = x @ model.weights[0] + model.biases[0]
    h = np.maximum(0.0, z1)
    out = h @ model.weights[1] + model.biases[1]
    return z1, h, out


def train_autoencoder(train: LabeledDataset, bottleneck_dim: int | None = None,
                      epochs: int = 100, lr: float = 0.001,
                      seed: int = 0, batch_size: int = 32) -> AutoencoderModel:
    """Adam-trained reconstruction objective; deterministic given the seed."""
    x_all = train.inputs
    d = x_all.shape[1]
    if bottleneck_dim is None:
        bottleneck_dim = default_bottleneck(d)
    model = _init_autoencoder(d, bottleneck_dim, seed)
    model.epochs = epochs
    model.learning_rate = lr
    if epochs == 0:
        return model

    rng = np.random.default_rng(seed + 1)
    params = model.weights + model.biases
    state: dict = {}
    n = x_all.shape[0]
    for epoch in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            x = x_all[order[start:start + batch_size]]
            z1, h, out = _ae_forward(model, x)
            err = out - x
            loss = np.mean(err * err)
            if not np.isfinite(loss):
                raise DivergenceError(epoch)
            m = x.shape[0]
            dout = 2.0 * err / (m * x.shape[1])
            gw2 = h.T @ dout
            gb2 = dout.sum(axis=0)
            dh = dout @ model.weights[1].T
            dz1 = dh * (z1 > 0.0)
            gw1 = x.T @ dz1
            gb1 = dz1.sum(axis=0)
            adam_step(params, [gw1, gw2, gb1, gb2], state, lr=lr)
    return model


def reconstruction_error(model: AutoencoderModel, x) -> float:
    """Mean squared error between an input and its reconstruction."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != model.weights[0].shape[0]:
        raise DimensionMismatchError(model.weights[0].shape[0], x.shape,
                                     "reconstruction input")
    _, _, out = _ae_forward(model, x.reshape(1, -1))
    diff = out[0] - x
    return float(np.mean(diff * diff))


def reconstruction_errors(model: AutoencoderModel, inputs: np.ndarray) -> np.ndarray:
    inputs = np.asarray(inputs, dtype=np.float64)
    _, _, out = _ae_forward(model, inputs)
    return np.mean((out - inputs) ** 2, axis=1)


# ---------------------------------------------------------------------------
# Gamma MLE and threshold fitting

@dataclass
class GammaFit:
    shape: float
    scale: float
    threshold: float
    false_alarm_rate: float


def _gamma_mle(samples: np.ndarray, max_iter: int = 200,
               tol: float = 1e-12) -> tuple[float, float]:
    """Newton iteration on the shape equation ln(a) - psi(a) = s."""
    mean = samples.mean()
    s = np.log(mean) - np.mean(np.log(samples))
    if s < 1e-4:
        # Jensen's gap vanishes only as the samples become constant; the
        # implied shape (roughly 1/(12 s)) is then too large for the
        # quantile search to resolve in double precision
        raise DomainError("samples too concentrated for a Gamma fit")
    # closed-form starting point
    shape = (3.0 - s + np.sqrt((s - 3.0) ** 2 + 24.0 * s)) / (12.0 * s)
    for _ in range(max_iter):
        f = np.log(shape) - digamma(shape) - s
        fprime = 1.0 / shape - trigamma(shape)
        step = f / fprime
        new_shape = shape - step
        if new_shape <= 0:
            new_shape = shape / 2.0
        if abs(new_shape - shape) < tol * max(1.0, shape):
            shape = new_shape
            break
        shape = new_shape
    else:
        raise ConvergenceError("Gamma shape MLE did not converge")
    return shape, mean / shape


def gamma_cdf(x: float, shape: float, scale: float) -> float:
    if x <= 0:
        return 0.0
    return reg_lower_incomplete_gamma(shape, x / scale)


def gamma_quantile(p: float, shape: float, scale: float,
                   tol: float = 1e-10) -> float:
    """Bisection on the regularized incomplete gamma CDF."""
    if not (0.0 < p < 1.0):
        raise DomainError(f"quantile level must be in (0, 1), got {p}")
    lo, hi = 0.0, shape * scale + scale
    while gamma_cdf(hi, shape, scale) < p:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if gamma_cdf(mid, shape, scale) < p:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol * max(1.0, hi):
            break
    return 0.5 * (lo + hi)


def fit_gamma(samples, epsilon: float = 0.0001) -> GammaFit:
    """Maximum-likelihood Gamma fit plus the 1 - epsilon validity threshold."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size < 30:
        raise EmptyInputError(f"need >= 30 samples for a Gamma fit, got {samples.size}")
    if np.any(samples <= 0):
        raise DomainError("all samples must be positive for a Gamma fit")
    if not (0.0 < epsilon < 1.0):
        raise DomainError(f"false-alarm rate must be in (0, 1), got {epsilon}")
    shape, scale = _gamma_mle(samples)
    threshold = gamma_quantile(1.0 - epsilon, shape, scale)
    return GammaFit(shape, scale, threshold, epsilon)


# ---------------------------------------------------------------------------
# validity reporting

@dataclass
class ValidityReport:
    total: int
    valid: int
    invalid: int
    validity_pct: float
    threshold: float
    gamma_shape: float
    gamma_scale: float
    epsilon: float
    flags: list[bool]

    def to_json(self) -> dict:
        return {
            "total": self.total,
            "valid": self.valid,
            "invalid": self.invalid,
            "validity_pct": self.validity_pct,
            "threshold": self.threshold,
            "gamma_shape": self.gamma_shape,
            "gamma_scale": self.gamma_scale,
            "epsilon": self.epsilon,
        }


def validate_corpus(model: AutoencoderModel, fit: GammaFit, inputs) -> ValidityReport:
    """Per-input valid/invalid flags under the fitted threshold."""
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[0] == 0:
        raise EmptyInputError("corpus must be a non-empty (n, d) matrix")
    errors = reconstruction_errors(model, inputs)
    flags = errors <= fit.threshold
    valid = int(flags.sum())
    total = int(inputs.shape[0])
    return ValidityReport(
        total=total,
        valid=valid,
        invalid=total - valid,
        validity_pct=100.0 * valid / total,
        threshold=fit.threshold,
        gamma_shape=fit.shape,
        gamma_scale=fit.scale,
        epsilon=fit.false_alarm_rate,
        flags=flags.tolist(),
    )
