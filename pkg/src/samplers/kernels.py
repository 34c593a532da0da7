"""MCMC transition kernels: random-walk Metropolis, MALA and HMC.

Kernels take a ChainState and a TuningState and return the next ChainState.
They are single-threaded per chain and consume randomness only from the
chain's own stream, so a chain's trajectory does not depend on which worker
runs it.

The diagonal preconditioner P is the inverse mass matrix: HMC momenta are
drawn from N(0, P⁻¹), MALA and RWM proposals scale their noise by √P.
With `jitter_steps` set, each HMC transition draws its leapfrog count
uniformly from 1..2L−1 (mean L) after the momentum, from the same stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, NamedTuple

import numpy as np

from src.errors import InvalidArgumentError, ModelEvaluationError
from src.model.targets import TargetModel
from src.schemas import TuningState

TARGET_ACCEPT = {"rwm": 0.234, "mala": 0.574, "hmc": 0.80}
DIVERGENCE_THRESHOLD = 1000.0


@dataclass
class ChainState:
    position: np.ndarray
    rng_stream: np.random.Generator
    last_log_density: float
    last_gradient: np.ndarray | None = None
    accept_count: int = 0
    step_count: int = 0
    divergences: int = 0
    gradient_evaluations: int = 0
    last_accept_prob: float = math.nan


def init_chain_state(
    model: TargetModel,
    position,
    rng: np.random.Generator,
    with_gradient: bool = True,
) -> ChainState:
    """Evaluate the target at a starting point; fail loudly if it is unusable."""
    position = np.array(position, dtype=float)
    try:
        log_density, gradient = model.evaluate(position, with_gradient=with_gradient)
    except (ArithmeticError, ValueError) as exc:
        raise ModelEvaluationError(f"cannot evaluate {model.name} at initial point", position) from exc
    if not math.isfinite(log_density) or (
        gradient is not None and not np.all(np.isfinite(gradient))
    ):
        raise ModelEvaluationError(f"non-finite log density of {model.name} at initial point", position)
    return ChainState(
        position=position,
        rng_stream=rng,
        last_log_density=log_density,
        last_gradient=gradient,
        gradient_evaluations=1 if with_gradient else 0,
    )


def metropolis_probability(log_ratio: float) -> float:
    """min(1, exp(log_ratio)); NaN counts as rejection."""
    if math.isnan(log_ratio):
        return 0.0
    return 1.0 if log_ratio >= 0 else math.exp(log_ratio)


def acceptance_probability(delta_h: float) -> float:
    """HMC acceptance min(1, exp(−ΔH))."""
    return metropolis_probability(-delta_h)


def _finite(log_density: float, gradient: np.ndarray | None) -> bool:
    return math.isfinite(log_density) and (gradient is None or bool(np.all(np.isfinite(gradient))))


def _advance(state: ChainState, position, log_density, gradient, accept_prob: float, accepted: bool,
             gradient_evaluations: int, divergent: bool = False) -> ChainState:
    if accepted:
        return replace(
            state,
            position=position,
            last_log_density=log_density,
            last_gradient=gradient,
            accept_count=state.accept_count + 1,
            step_count=state.step_count + 1,
            gradient_evaluations=state.gradient_evaluations + gradient_evaluations,
            last_accept_prob=accept_prob,
        )
    return replace(
        state,
        step_count=state.step_count + 1,
        divergences=state.divergences + int(divergent),
        gradient_evaluations=state.gradient_evaluations + gradient_evaluations,
        last_accept_prob=accept_prob,
    )


# ── Leapfrog ──────────────────────────────────────────────────────────────────

class LeapfrogResult(NamedTuple):
    position: np.ndarray
    momentum: np.ndarray
    log_density: float
    gradient: np.ndarray
    divergent: bool
    gradient_evaluations: int


def leapfrog(
    model: TargetModel,
    q,
    p,
    step_size: float,
    steps: int,
    preconditioner,
    gradient: np.ndarray | None = None,
    log_density: float | None = None,
) -> LeapfrogResult:
    """Integrate Hamiltonian dynamics with `steps` half-kick/drift/half-kick updates.

    Stops early and flags a divergence as soon as a non-finite log density or
    gradient appears.
    """
    q = np.array(q, dtype=float)
    p = np.array(p, dtype=float)
    precond = np.asarray(preconditioner, dtype=float)
    if not step_size > 0:
        raise InvalidArgumentError(f"step size must be positive, got {step_size}")
    if steps < 1:
        raise InvalidArgumentError(f"leapfrog needs at least one step, got {steps}")
    if q.shape != p.shape or q.shape != precond.shape:
        raise InvalidArgumentError("position, momentum and preconditioner must have equal length")

    evaluations = 0
    if gradient is None or log_density is None:
        log_density, gradient = model.evaluate(q)
        evaluations += 1
        if not _finite(log_density, gradient):
            return LeapfrogResult(q, p, log_density, gradient, True, evaluations)

    half = 0.5 * step_size
    p = p + half * gradient
    for i in range(steps):
        q = q + step_size * precond * p
        log_density, gradient = model.evaluate(q)
        evaluations += 1
        if not _finite(log_density, gradient):
            return LeapfrogResult(q, p, log_density, gradient, True, evaluations)
        p = p + (half if i == steps - 1 else step_size) * gradient
    return LeapfrogResult(q, p, log_density, gradient, False, evaluations)


def kinetic_energy(p: np.ndarray, precond: np.ndarray) -> float:
    return 0.5 * float(np.sum(precond * p * p))


# ── HMC ───────────────────────────────────────────────────────────────────────

def trajectory_steps(tuning: TuningState, rng: np.random.Generator) -> int:
    steps = tuning.num_leapfrog_steps
    if tuning.jitter_steps and steps > 1:
        return int(rng.integers(1, 2 * steps))
    return steps


def hmc_step(model: TargetModel, state: ChainState, tuning: TuningState) -> ChainState:
    """One HMC transition with a preconditioned Gaussian momentum."""
    precond = np.asarray(tuning.diag_preconditioner, dtype=float)
    rng = state.rng_stream
    p0 = rng.standard_normal(precond.size) / np.sqrt(precond)
    h0 = -state.last_log_density + kinetic_energy(p0, precond)
    steps = trajectory_steps(tuning, rng)

    traj = leapfrog(
        model,
        state.position,
        p0,
        tuning.step_size,
        steps,
        precond,
        gradient=state.last_gradient,
        log_density=state.last_log_density,
    )
    if traj.divergent:
        delta_h = math.inf
    else:
        delta_h = -traj.log_density + kinetic_energy(traj.momentum, precond) - h0
    divergent = traj.divergent or not math.isfinite(delta_h) or abs(delta_h) > DIVERGENCE_THRESHOLD
    accept_prob = 0.0 if divergent else acceptance_probability(delta_h)
    accepted = rng.uniform() < accept_prob
    return _advance(
        state, traj.position, traj.log_density, traj.gradient,
        accept_prob, accepted, traj.gradient_evaluations, divergent,
    )


# ── MALA ──────────────────────────────────────────────────────────────────────

def mala_proposal_mean(q, gradient, step_size: float, precond) -> np.ndarray:
    """q + (ε²/2)·P·∇log p(q)."""
    return np.asarray(q) + 0.5 * step_size * step_size * np.asarray(precond) * np.asarray(gradient)


def mala_log_acceptance_ratio(
    q, log_density: float, gradient,
    q_new, log_density_new: float, gradient_new,
    step_size: float, precond,
) -> float:
    """Metropolis–Hastings log ratio including the asymmetric-proposal correction."""
    precond = np.asarray(precond, dtype=float)
    scale = 2.0 * step_size * step_size * precond
    forward = np.asarray(q_new) - mala_proposal_mean(q, gradient, step_size, precond)
    backward = np.asarray(q) - mala_proposal_mean(q_new, gradient_new, step_size, precond)
    log_q_forward = -float(np.sum(forward * forward / scale))
    log_q_backward = -float(np.sum(backward * backward / scale))
    return log_density_new - log_density + log_q_backward - log_q_forward


def mala_step(model: TargetModel, state: ChainState, tuning: TuningState) -> ChainState:
    precond = np.asarray(tuning.diag_preconditioner, dtype=float)
    eps = tuning.step_size
    rng = state.rng_stream
    noise = rng.standard_normal(precond.size)
    proposal = mala_proposal_mean(state.position, state.last_gradient, eps, precond) + eps * np.sqrt(precond) * noise
    log_density, gradient = model.evaluate(proposal)

    divergent = not _finite(log_density, gradient)
    if divergent:
        accept_prob = 0.0
    else:
        log_ratio = mala_log_acceptance_ratio(
            state.position, state.last_log_density, state.last_gradient,
            proposal, log_density, gradient, eps, precond,
        )
        accept_prob = metropolis_probability(log_ratio)
    accepted = rng.uniform() < accept_prob
    return _advance(state, proposal, log_density, gradient, accept_prob, accepted, 1, divergent)


# ── Random-walk Metropolis ────────────────────────────────────────────────────

def rwm_acceptance_probability(log_density: float, log_density_new: float) -> float:
    return metropolis_probability(log_density_new - log_density)


def rwm_step(model: TargetModel, state: ChainState, tuning: TuningState) -> ChainState:
    precond = np.asarray(tuning.diag_preconditioner, dtype=float)
    rng = state.rng_stream
    proposal = state.position + tuning.step_size * np.sqrt(precond) * rng.standard_normal(precond.size)
    log_density, _ = model.evaluate(proposal, with_gradient=False)

    divergent = not math.isfinite(log_density)
    accept_prob = 0.0 if divergent else rwm_acceptance_probability(state.last_log_density, log_density)
    accepted = rng.uniform() < accept_prob
    return _advance(state, proposal, log_density, None, accept_prob, accepted, 0, divergent)


Kernel = Callable[[TargetModel, ChainState, TuningState], ChainState]

KERNELS: dict[str, Kernel] = {"rwm": rwm_step, "mala": mala_step, "hmc": hmc_step}


def needs_gradient(sampler: str) -> bool:
    return sampler != "rwm"
