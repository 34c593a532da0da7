"""Pydantic data models used across the engine, diagnostics and experiments."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, Field, field_validator, model_validator

SamplerName = Literal["rwm", "mala", "hmc"]
AdaptationMode = Literal["per_chain", "cross_chain"]
InitStrategy = Literal["overdispersed", "fixed_points", "standard_normal", "exact"]
StoppingReason = Literal["fixed-budget", "target-met", "budget-exhausted"]
ExperimentKind = Literal["run", "replicate", "sweep_chains", "oracle"]


def _token(value: str) -> str:
    """Accept CLI spellings such as `cross-chain` for `cross_chain`."""
    return value.strip().lower().replace("-", "_") if isinstance(value, str) else value


# ── Sampler tuning ────────────────────────────────────────────────────────────

class DualAveragingState(BaseModel):
    mu: float                  # shrinkage target, log(10 * eps0) on the first run
    log_step: float
    log_step_bar: float = 0.0
    h_bar: float = 0.0
    iteration: int = 0


class TuningState(BaseModel):
    step_size: float = Field(gt=0)
    diag_preconditioner: list[float]
    num_leapfrog_steps: int = Field(default=1, ge=1)
    target_accept: float = Field(gt=0, lt=1)
    jitter_steps: bool = False         # HMC: draw L uniformly from 1..2L-1 each step
    frozen: bool = False
    dual_avg: DualAveragingState
    flags: list[str] = Field(default_factory=list)

    @field_validator("diag_preconditioner")
    @classmethod
    def _positive_entries(cls, value: list[float]) -> list[float]:
        if not value or any(not (v > 0) for v in value):
            raise ValueError("preconditioner entries must be positive")
        return value


# ── Run configuration ─────────────────────────────────────────────────────────

class RunConfig(BaseModel):
    chains: int = Field(default=4, ge=1)
    warmup: int = Field(default=1000, ge=0)
    samples: int = Field(default=1000, ge=1)
    groups: int | None = Field(default=None, ge=1)   # None: one start per chain
    sampler: SamplerName = "hmc"
    adaptation: AdaptationMode = "per_chain"
    init_strategy: InitStrategy = "overdispersed"
    init_scale: float | None = Field(default=None, gt=0)
    init_points: list[list[float]] | None = None
    root_seed: int = Field(default=0, ge=0, lt=2**64)
    rhat_threshold: float = Field(default=0.01, gt=0)
    target_ess: float | None = Field(default=None, gt=0)
    max_total_iterations: int | None = Field(default=None, ge=1)
    num_leapfrog_steps: int = Field(default=8, ge=1)
    initial_step_size: float | None = Field(default=None, gt=0)
    jitter_trajectory: bool = True

    @field_validator("sampler", "adaptation", "init_strategy", mode="before")
    @classmethod
    def _normalise_token(cls, value):
        return _token(value)

    @model_validator(mode="after")
    def _groups_divide_chains(self) -> "RunConfig":
        if self.groups is not None and self.chains % self.groups != 0:
            raise ValueError(
                f"groups ({self.groups}) must divide chains ({self.chains})"
            )
        return self

    @property
    def num_groups(self) -> int:
        return self.groups or self.chains

    @property
    def chains_per_group(self) -> int:
        return self.chains // self.num_groups


class ChainMeta(BaseModel):
    chain: int
    group: int
    seed: int
    divergences: int = 0
    warmup_divergences: int = 0
    acceptance_rate: float = 0.0
    gradient_evaluations: int = 0


# ── Diagnostics ───────────────────────────────────────────────────────────────

class QuantitySummary(BaseModel):
    quantity: str
    mean: float
    chain_means: list[float]
    sd: float
    q05: float
    q50: float
    q95: float
    bhat: float
    what: float
    rhat: float
    split_rhat: float
    nested_rhat: float | None = None
    ess: float
    mcse: float
    flags: list[str] = Field(default_factory=list)


class DiagnosticsReport(BaseModel):
    quantities: list[QuantitySummary]
    num_chains: int
    num_draws: int                 # sampling draws per chain
    num_groups: int
    rhat_threshold: float = 0.01

    def get(self, name: str) -> QuantitySummary:
        for q in self.quantities:
            if q.quantity == name:
                return q
        raise KeyError(name)

    @property
    def min_ess(self) -> float:
        values = [q.ess for q in self.quantities]
        return math.nan if any(math.isnan(v) for v in values) else min(values)

    @property
    def max_rhat(self) -> float:
        values = [q.rhat for q in self.quantities]
        return math.nan if any(math.isnan(v) for v in values) else max(values)

    @property
    def flags(self) -> list[str]:
        seen: list[str] = []
        for q in self.quantities:
            for f in q.flags:
                if f not in seen:
                    seen.append(f)
        return seen


# ── Oracle ────────────────────────────────────────────────────────────────────

class OUProcessSpec(BaseModel):
    mu0: float = 2.0
    sigma0: float = Field(default=1.0, ge=0)
    mu: float = 0.0
    sigma: float = Field(default=1.0, gt=0)


class ReplicateStudy(BaseModel):
    estimates: list[float]
    groups: list[int] | None = None    # replicate -> initialization id

    @model_validator(mode="after")
    def _check_shape(self) -> "ReplicateStudy":
        if len(self.estimates) < 2:
            raise ValueError("a replicate study needs at least 2 replicates")
        if self.groups is not None and len(self.groups) != len(self.estimates):
            raise ValueError("groups must label every replicate")
        return self


# ── Experiments ───────────────────────────────────────────────────────────────

class ExperimentSpec(BaseModel):
    kind: ExperimentKind = "run"
    run: RunConfig = Field(default_factory=RunConfig)
    target: str = "gaussian:d=1"
    replicates: int = Field(default=1, ge=1)
    seeds: list[int] | None = None
    sweep_chain_counts: list[int] = Field(default_factory=lambda: [2, 4, 8])
    bias_threshold: float = Field(default=0.1, gt=0)
    output_dir: Path = Path("outputs")
    output_format: Literal["csv", "bin"] = "csv"
    include_squares: bool = False
    threads: int = Field(default=1, ge=1)
    ou: OUProcessSpec = Field(default_factory=OUProcessSpec)
    t_grid: list[float] = Field(default_factory=lambda: [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0])
    two_state_q: list[float] = Field(
        default_factory=lambda: [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]
    )
    two_state_length: int = Field(default=1_000_000, ge=10)
    ou_groups: int = Field(default=0, ge=0)          # 0 skips the simulated decay table
    ou_replicates: int = Field(default=2000, ge=2)

    @field_validator("kind", mode="before")
    @classmethod
    def _normalise_kind(cls, value):
        return _token(value)

    @field_validator("sweep_chain_counts")
    @classmethod
    def _strictly_increasing(cls, value: list[int]) -> list[int]:
        if not value or any(b <= a for a, b in zip(value, value[1:])):
            raise ValueError("sweep chain counts must be non-empty and strictly increasing")
        if any(m < 1 for m in value):
            raise ValueError("sweep chain counts must be positive")
        return value

    @property
    def seed_list(self) -> list[int]:
        if self.seeds is not None:
            return list(self.seeds)
        return [self.run.root_seed + r for r in range(self.replicates)]
