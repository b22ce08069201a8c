"""Numeric kernel: dense vectors, distances, argmin, and special functions.

All metric math runs in 64-bit floats regardless of the on-disk precision,
so argmin results and tie-breaks are reproducible across platforms.
The special functions (regularized incomplete gamma/beta, digamma,
trigamma) are implemented with series / continued-fraction expansions and
a configurable tolerance; they back the Gamma-threshold fitting and the
Student-t p-value computation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DimensionMismatchError, DomainError, EmptyInputError


@dataclass(frozen=True)
class SpecialFnConfig:
    """Iteration budget and tolerance for the special-function routines."""

    max_iterations: int = 200
    tolerance: float = 1e-10

    def __post_init__(self):
        if not (0.0 < self.tolerance <= 1e-3):
            raise DomainError(f"tolerance must be in (0, 1e-3], got {self.tolerance}")
        if self.max_iterations < 50:
            raise DomainError(f"max_iterations must be >= 50, got {self.max_iterations}")


DEFAULT_SPECIAL_CFG = SpecialFnConfig()


def as_vector(values) -> np.ndarray:
    """Validate and return a 1-D float64 vector: non-empty, all finite."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1:
        raise DomainError(f"expected a 1-D vector, got shape {v.shape}")
    if v.size == 0:
        raise EmptyInputError("empty vector")
    if not np.all(np.isfinite(v)):
        raise DomainError("vector contains NaN or Inf")
    return v


def euclidean(a, b) -> float:
    """Euclidean distance between two equal-length vectors."""
    av = as_vector(a)
    bv = as_vector(b)
    if av.shape[0] != bv.shape[0]:
        raise DimensionMismatchError(av.shape[0], bv.shape[0], "euclidean distance")
    d = av - bv
    return float(np.sqrt(np.dot(d, d)))


def distances_to(query: np.ndarray, matrix: np.ndarray) -> np.ndarray:
    """Distances from one query vector to every row of a matrix.

    This is the inner loop of the exhaustive nearest-neighbor scan; it uses
    the plain (row - query)^2 formulation so serial and parallel callers
    produce bit-identical values.
    """
    diff = matrix - query
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


def argmin_dist(query, candidates) -> tuple[int, float]:
    """Nearest candidate to the query; ties broken by lowest index.

    `candidates` is a sequence of vectors or a 2-D array with one candidate
    per row.
    """
    q = as_vector(query)
    m = np.asarray(candidates, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(1, -1) if m.size else m.reshape(0, 0)
    if m.shape[0] == 0:
        raise EmptyInputError("argmin over empty candidate set")
    if m.shape[1] != q.shape[0]:
        raise DimensionMismatchError(q.shape[0], m.shape[1], "argmin candidates")
    d = distances_to(q, m)
    idx = int(np.argmin(d))  # np.argmin returns the first minimum
    return idx, float(d[idx])


def _log_gamma(x: float) -> float:
    return math.lgamma(x)


def reg_lower_incomplete_gamma(shape: float, x: float,
                               cfg: SpecialFnConfig = DEFAULT_SPECIAL_CFG) -> float:
    """Regularized lower incomplete gamma P(shape, x) in [0, 1].

    Series expansion for x < shape + 1, Lentz continued fraction for the
    complementary function otherwise.
    """
    if shape <= 0:
        raise DomainError(f"shape must be positive, got {shape}")
    if x < 0:
        raise DomainError(f"x must be non-negative, got {x}")
    if x == 0.0:
        return 0.0

    lg = _log_gamma(shape)
    if x < shape + 1.0:
        # series: P(a,x) = x^a e^-x / Gamma(a) * sum x^n / (a)_(n+1)
        term = 1.0 / shape
        total = term
        a = shape
        for _ in range(cfg.max_iterations):
            a += 1.0
            term *= x / a
            total += term
            if abs(term) < abs(total) * cfg.tolerance:
                return min(1.0, total * math.exp(-x + shape * math.log(x) - lg))
        raise ConvergenceError("incomplete gamma series did not converge")

    # continued fraction for Q(a,x), modified Lentz
    tiny = 1e-300
    b = x + 1.0 - shape
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, cfg.max_iterations + 1):
        an = -i * (i - shape)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < cfg.tolerance:
            q = math.exp(-x + shape * math.log(x) - lg) * h
            return max(0.0, 1.0 - q)
    raise ConvergenceError("incomplete gamma continued fraction did not converge")


def _betacf(a: float, b: float, x: float, cfg: SpecialFnConfig) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    tiny = 1e-300
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, cfg.max_iterations + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < cfg.tolerance:
            return h
    raise ConvergenceError("incomplete beta continued fraction did not converge")


def reg_incomplete_beta(a: float, b: float, x: float,
                        cfg: SpecialFnConfig = DEFAULT_SPECIAL_CFG) -> float:
    """Regularized incomplete beta I_x(a, b) in [0, 1]."""
    if a <= 0 or b <= 0:
        raise DomainError(f"a and b must be positive, got a={a}, b={b}")
    if not (0.0 <= x <= 1.0):
        raise DomainError(f"x must be in [0, 1], got {x}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    ln_front = (_log_gamma(a + b) - _log_gamma(a) - _log_gamma(b)
                + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(ln_front)
    # use the symmetry to keep the continued fraction in its fast region
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x, cfg) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x, cfg) / b


def digamma(x: float, cfg: SpecialFnConfig = DEFAULT_SPECIAL_CFG) -> float:
    """Digamma (logarithmic derivative of Gamma) for x > 0.

    Recurrence shifts x above 8, then the asymptotic expansion applies.
    """
    if x <= 0:
        raise DomainError(f"digamma requires x > 0, got {x}")
    result = 0.0
    while x < 8.0:
        result -= 1.0 / x
        x += 1.0
    inv = 1.0 / x
    inv2 = inv * inv
    # asymptotic series: ln x - 1/(2x) - 1/(12x^2) + 1/(120x^4) - 1/(252x^6) + ...
    result += (math.log(x) - 0.5 * inv
               - inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 / 252.0)))
    return result


def trigamma(x: float) -> float:
    """Trigamma (derivative of digamma) for x > 0; used by the Gamma MLE Newton step."""
    if x <= 0:
        raise DomainError(f"trigamma requires x > 0, got {x}")
    result = 0.0
    while x < 8.0:
        result += 1.0 / (x * x)
        x += 1.0
    inv = 1.0 / x
    inv2 = inv * inv
    # asymptotic: 1/x + 1/(2x^2) + 1/(6x^3) - 1/(30x^5) + 1/(42x^7)
    result += inv * (1.0 + inv * (0.5 + inv * (1.0 / 6.0 - inv2 * (1.0 / 30.0 - inv2 / 42.0))))
    return result
