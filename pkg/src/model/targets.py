"""Built-in target distributions.

Every target exposes log p(θ) (up to a constant) and ∇log p(θ). Gaussians
carry their normalising constant so the standard normal evaluates exactly
to −½log(2π) at the origin.

Gradient evaluations are counted per model; the count is the cost unit of
the chain-count sweep, so it must stay exact when many chains share one
model from different worker threads.
"""

from __future__ import annotations

import threading
from typing import Callable

import numpy as np

from src.errors import InvalidArgumentError

ValueAndGrad = Callable[[np.ndarray], tuple[float, np.ndarray]]
ExactSampler = Callable[[np.random.Generator, int], np.ndarray]

_LOG_2PI = float(np.log(2.0 * np.pi))


class TargetModel:
    """A log-density over R^d with optional analytic moments."""

    def __init__(
        self,
        name: str,
        dimension: int,
        value_and_grad: ValueAndGrad,
        *,
        analytic_mean: np.ndarray | None = None,
        analytic_marginal_sd: np.ndarray | None = None,
        exact_sampler: ExactSampler | None = None,
    ):
        if dimension < 1:
            raise InvalidArgumentError(f"dimension must be positive, got {dimension}")
        self.name = name
        self.dimension = int(dimension)
        self._value_and_grad = value_and_grad
        self.analytic_mean = None if analytic_mean is None else np.asarray(analytic_mean, dtype=float)
        self.analytic_marginal_sd = (
            None if analytic_marginal_sd is None else np.asarray(analytic_marginal_sd, dtype=float)
        )
        self._exact_sampler = exact_sampler
        self._lock = threading.Lock()
        self._gradient_evaluations = 0
        self._density_evaluations = 0

    def __repr__(self) -> str:
        return f"TargetModel(name={self.name!r}, dimension={self.dimension})"

    # ── Counters ──────────────────────────────────────────────────────────────

    @property
    def gradient_evaluations(self) -> int:
        with self._lock:
            return self._gradient_evaluations

    @property
    def density_evaluations(self) -> int:
        with self._lock:
            return self._density_evaluations

    @property
    def has_analytic_moments(self) -> bool:
        return self.analytic_mean is not None and self.analytic_marginal_sd is not None

    @property
    def has_exact_sampler(self) -> bool:
        return self._exact_sampler is not None

    # ── Evaluation ────────────────────────────────────────────────────────────

    def _check(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.dimension,):
            raise InvalidArgumentError(
                f"{self.name}: expected a vector of length {self.dimension}, "
                f"got shape {theta.shape}"
            )
        return theta

    def evaluate(self, theta, with_gradient: bool = True) -> tuple[float, np.ndarray | None]:
        theta = self._check(theta)
        log_density, gradient = self._value_and_grad(theta)
        with self._lock:
            self._density_evaluations += 1
            if with_gradient:
                self._gradient_evaluations += 1
        return float(log_density), (gradient if with_gradient else None)

    def log_density(self, theta) -> float:
        return self.evaluate(theta, with_gradient=False)[0]

    def gradient(self, theta) -> np.ndarray:
        return self.evaluate(theta)[1]

    def sample_exact(self, rng: np.random.Generator, size: int = 1) -> np.ndarray:
        """Exact iid draws from the target, shape (size, d)."""
        if self._exact_sampler is None:
            raise InvalidArgumentError(f"{self.name} has no exact sampler")
        return self._exact_sampler(rng, size)


def evaluate(model: TargetModel, theta) -> tuple[float, np.ndarray]:
    """Return (log p(θ), ∇log p(θ)) and count one gradient evaluation."""
    return model.evaluate(theta, with_gradient=True)


# ── Gaussian family ───────────────────────────────────────────────────────────

def make_gaussian(mean, marginal_variances, name: str | None = None) -> TargetModel:
    """Diagonal-covariance Gaussian with analytic moments."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    variances = np.atleast_1d(np.asarray(marginal_variances, dtype=float))
    if mean.shape != variances.shape or mean.ndim != 1:
        raise InvalidArgumentError(
            f"mean and variances must be vectors of equal length, got {mean.shape} and {variances.shape}"
        )
    if not np.all(np.isfinite(variances)) or np.any(variances <= 0):
        raise InvalidArgumentError(f"all variances must be positive and finite, got {variances.tolist()}")
    if not np.all(np.isfinite(mean)):
        raise InvalidArgumentError("mean must be finite")

    precision = 1.0 / variances
    log_norm = -0.5 * float(np.sum(np.log(variances))) - 0.5 * mean.size * _LOG_2PI
    sd = np.sqrt(variances)

    def value_and_grad(theta: np.ndarray) -> tuple[float, np.ndarray]:
        diff = theta - mean
        grad = -diff * precision
        return log_norm + 0.5 * float(diff @ grad), grad

    def sampler(rng: np.random.Generator, size: int) -> np.ndarray:
        return mean + sd * rng.standard_normal((size, mean.size))

    return TargetModel(
        name or f"gaussian(d={mean.size})",
        mean.size,
        value_and_grad,
        analytic_mean=mean.copy(),
        analytic_marginal_sd=sd,
        exact_sampler=sampler,
    )


def ill_conditioned_variances(d: int, condition_number: float) -> np.ndarray:
    """Variances log-spaced from 1 to condition_number, both ends exact."""
    if d < 2:
        raise InvalidArgumentError(f"ill-conditioned target needs d >= 2, got {d}")
    if not condition_number >= 1:
        raise InvalidArgumentError(f"condition number must be >= 1, got {condition_number}")
    if condition_number == 1:
        return np.ones(d)
    return np.geomspace(1.0, float(condition_number), d)


def make_ill_conditioned(d: int, condition_number: float) -> TargetModel:
    variances = ill_conditioned_variances(d, condition_number)
    return make_gaussian(
        np.zeros(d), variances, name=f"illcond(d={d},kappa={condition_number:g})"
    )


# ── Banana ────────────────────────────────────────────────────────────────────

def make_banana(curvature: float = 1.0, scale: float = 2.0) -> TargetModel:
    """2-D banana: log p(x, y) = −x²/(2s²) − (y − c·x²)²/2.

    x ~ N(0, s²) and y | x ~ N(c·x², 1), so the moments and exact draws are
    available in closed form.
    """
    if not scale > 0:
        raise InvalidArgumentError(f"banana scale must be positive, got {scale}")
    c = float(curvature)
    inv_s2 = 1.0 / (scale * scale)

    def value_and_grad(theta: np.ndarray) -> tuple[float, np.ndarray]:
        x, y = theta
        r = y - c * x * x
        log_density = -0.5 * x * x * inv_s2 - 0.5 * r * r
        grad = np.array([-x * inv_s2 + 2.0 * c * x * r, -r])
        return log_density, grad

    def sampler(rng: np.random.Generator, size: int) -> np.ndarray:
        x = scale * rng.standard_normal(size)
        y = c * x * x + rng.standard_normal(size)
        return np.column_stack([x, y])

    return TargetModel(
        f"banana(curv={c:g},scale={scale:g})",
        2,
        value_and_grad,
        analytic_mean=np.array([0.0, c * scale**2]),
        analytic_marginal_sd=np.array([scale, np.sqrt(1.0 + 2.0 * c * c * scale**4)]),
        exact_sampler=sampler,
    )
