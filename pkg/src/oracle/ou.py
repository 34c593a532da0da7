"""Ornstein–Uhlenbeck oracle: exact marginals, exact transitions and TV distance.

The process dθ = −(θ − μ)dt + √2·σ dW started from normal(μ₀, σ₀) has
marginal normal(μ + (μ₀−μ)e^(−t), √(σ² + (σ₀²−σ²)e^(−2t))) at time t.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate, optimize
from scipy.stats import norm

from src.errors import ContractViolationError, InvalidArgumentError
from src.schemas import OUProcessSpec

TV_SPAN_SDS = 12.0
TIME_AVERAGE_STEP = 0.01
TV_CROSS_CHECK_TOL = 1e-8


def ou_marginal(spec: OUProcessSpec, t: float) -> tuple[float, float]:
    if t < 0:
        raise InvalidArgumentError(f"time must be non-negative, got {t}")
    decay = math.exp(-t)
    mean = spec.mu + (spec.mu0 - spec.mu) * decay
    variance = spec.sigma**2 + (spec.sigma0**2 - spec.sigma**2) * decay * decay
    return mean, math.sqrt(max(variance, 0.0))


def ou_exact_step(spec: OUProcessSpec, theta, delta: float, rng: np.random.Generator):
    """Advance θ (scalar or array) by time Δ without discretization error."""
    if not delta > 0:
        raise InvalidArgumentError(f"step must be positive, got {delta}")
    decay = math.exp(-delta)
    noise_sd = spec.sigma * math.sqrt(-math.expm1(-2.0 * delta))
    theta = np.asarray(theta, dtype=float)
    out = spec.mu + (theta - spec.mu) * decay + noise_sd * rng.standard_normal(theta.shape)
    return float(out) if out.ndim == 0 else out


def sample_initial(spec: OUProcessSpec, rng: np.random.Generator, size: int) -> np.ndarray:
    return spec.mu0 + spec.sigma0 * rng.standard_normal(size)


def simulate_ou(
    spec: OUProcessSpec,
    times,
    replicas: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Replicas from normal(μ₀, σ₀) stepped exactly through increasing `times`.

    Returns shape (len(times), replicas).
    """
    times = np.asarray(times, dtype=float)
    if np.any(times < 0) or np.any(np.diff(times) < 0):
        raise InvalidArgumentError("times must be non-negative and non-decreasing")
    theta = sample_initial(spec, rng, replicas)
    out = np.empty((times.size, replicas))
    now = 0.0
    for i, t in enumerate(times):
        if t > now:
            theta = ou_exact_step(spec, theta, t - now, rng)
            now = t
        out[i] = theta
    return out


def ou_time_average(
    spec: OUProcessSpec,
    horizon: float,
    replicas: int,
    rng: np.random.Generator,
    step: float = TIME_AVERAGE_STEP,
) -> np.ndarray:
    """Discrete approximation of (1/T)∫₀ᵀ θ(t) dt, one value per replica."""
    if not horizon > 0:
        raise InvalidArgumentError(f"horizon must be positive, got {horizon}")
    steps = max(1, int(round(horizon / step)))
    theta = sample_initial(spec, rng, replicas)
    total = np.zeros(replicas)
    for _ in range(steps):
        theta = ou_exact_step(spec, theta, horizon / steps, rng)
        total += theta
    return total / steps


# ── Total variation ───────────────────────────────────────────────────────────

def normal_crossings(mean1: float, sd1: float, mean2: float, sd2: float) -> list[float]:
    """Points where the two normal densities are equal, sorted."""
    if sd1 == sd2:
        return [] if mean1 == mean2 else [0.5 * (mean1 + mean2)]
    # log p1 − log p2 = a x² + b x + c
    a = 0.5 / sd2**2 - 0.5 / sd1**2
    b = mean1 / sd1**2 - mean2 / sd2**2
    c = 0.5 * mean2**2 / sd2**2 - 0.5 * mean1**2 / sd1**2 + math.log(sd2 / sd1)
    disc = b * b - 4.0 * a * c
    if disc < 0:
        return []
    root = math.sqrt(disc)
    return sorted({(-b - root) / (2.0 * a), (-b + root) / (2.0 * a)})


def tv_normal_equal_sd(mean1: float, mean2: float, sd: float) -> float:
    if not sd > 0:
        raise InvalidArgumentError(f"sd must be positive, got {sd}")
    return float(2.0 * norm.cdf(abs(mean1 - mean2) / (2.0 * sd)) - 1.0)


def tv_normal(mean1: float, sd1: float, mean2: float, sd2: float) -> float:
    """½∫|p − q| by quadrature, split where the densities cross.

    Equal-sd inputs are checked against the closed form.
    """
    if not (sd1 > 0 and sd2 > 0):
        raise InvalidArgumentError(f"standard deviations must be positive, got {sd1} and {sd2}")
    if mean1 == mean2 and sd1 == sd2:
        return 0.0
    lo = min(mean1 - TV_SPAN_SDS * sd1, mean2 - TV_SPAN_SDS * sd2)
    hi = max(mean1 + TV_SPAN_SDS * sd1, mean2 + TV_SPAN_SDS * sd2)
    edges = [lo, *[x for x in normal_crossings(mean1, sd1, mean2, sd2) if lo < x < hi], hi]

    def gap(x: float) -> float:
        return abs(norm.pdf(x, mean1, sd1) - norm.pdf(x, mean2, sd2))

    total = 0.0
    for a, b in zip(edges, edges[1:]):
        value, _ = integrate.quad(gap, a, b, epsabs=1e-13, epsrel=1e-12, limit=200)
        total += value
    tv = float(min(max(0.5 * total, 0.0), 1.0))
    if sd1 == sd2:
        closed = tv_normal_equal_sd(mean1, mean2, sd1)
        if abs(tv - closed) > TV_CROSS_CHECK_TOL:
            raise ContractViolationError(
                f"quadrature TV {tv!r} disagrees with the equal-sd closed form {closed!r}"
            )
    return tv


def tv_to_stationary(spec: OUProcessSpec, t: float) -> float:
    mean, sd = ou_marginal(spec, t)
    if sd == 0:
        return 1.0
    return tv_normal(mean, sd, spec.mu, spec.sigma)


def relaxation_time(spec: OUProcessSpec, epsilon: float, xtol: float = 1e-10) -> float:
    """Smallest t with D_TV(p̂(t), p) ≤ ε, by bisection."""
    if not 0 < epsilon < 1:
        raise InvalidArgumentError(f"epsilon must lie in (0, 1), got {epsilon}")

    def excess(t: float) -> float:
        return tv_to_stationary(spec, t) - epsilon

    if excess(0.0) <= 0:
        return 0.0
    upper = 1.0
    while excess(upper) > 0:
        upper *= 2.0
        if upper > 1e4:
            raise InvalidArgumentError(f"no relaxation within t = {upper}")
    return float(optimize.bisect(excess, 0.0, upper, xtol=xtol))


def indicator_bias(spec: OUProcessSpec, t: float, x: float) -> float:
    """|P_t(θ ≤ x) − P(θ ≤ x)|, bounded above by the TV distance at t."""
    mean, sd = ou_marginal(spec, t)
    if sd == 0:
        at_t = 1.0 if mean <= x else 0.0
    else:
        at_t = float(norm.cdf(x, mean, sd))
    return abs(at_t - float(norm.cdf(x, spec.mu, spec.sigma)))
