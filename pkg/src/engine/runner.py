"""Run orchestration: initialization, adaptive warmup, frozen sampling, diagnostics.

Chains run on a thread pool. In per_chain adaptation every chain runs its
whole warmup as one task and picks its own HMC trajectory length at each
metric-window end. In cross_chain adaptation the pool steps all
chains one iteration at a time and the pooled tuning is updated on the
calling thread between iterations, which is the only synchronization.
Each chain draws only from its own streams, so draws are identical for
any worker count.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from src.config import Config
from src.diagnostics.summary import ChainMatrix, QuantityOfInterest, default_quantities, summarize
from src.engine.initialization import initialize
from src.engine.rng import derive_chain_rng
from src.engine.run_log import RunLogger
from src.errors import ContractViolationError, InvalidArgumentError
from src.model.targets import TargetModel
from src.samplers.adaptation import (
    adapt_update,
    freeze,
    init_tuning,
    probe_jumps,
    select_num_leapfrog_steps,
    warmup_schedule,
)
from src.samplers.kernels import KERNELS, ChainState, init_chain_state, needs_gradient
from src.schemas import ChainMeta, DiagnosticsReport, RunConfig, StoppingReason, TuningState


@dataclass
class RunResult:
    config: RunConfig
    model_name: str
    matrix: ChainMatrix
    tunings: list[TuningState]
    gradient_evaluations: list[int]
    warmup_gradient_trace: np.ndarray      # (M, warmup) cumulative count after each iteration
    timings: dict[str, float]
    report: DiagnosticsReport
    stopping_reason: StoppingReason
    flags: list[str] = field(default_factory=list)
    density_evaluations: int = 0           # every model call, gradient or not

    @property
    def total_gradient_evaluations(self) -> int:
        return int(sum(self.gradient_evaluations))

    def meta(self) -> dict:
        """Everything run_meta.json records."""
        return {
            "model": self.model_name,
            "config": self.config.model_dump(mode="json"),
            "stopping_reason": self.stopping_reason,
            "flags": list(self.flags),
            "num_warmup": self.matrix.num_warmup,
            "num_draws": self.matrix.num_draws,
            "timings": dict(self.timings),
            "gradient_evaluations": list(self.gradient_evaluations),
            "density_evaluations": self.density_evaluations,
            "chains": [m.model_dump() for m in self.matrix.chain_meta],
            "tunings": [t.model_dump(mode="json") for t in self.tunings],
            "min_ess": self.report.min_ess,
            "max_rhat": self.report.max_rhat,
        }


class ChainRunner:
    """Runs one configured set of chains against one model.

    The runner checks that its chains account for every gradient evaluation
    the model counted, so a model must not be shared with another runner
    while a run is in progress.
    """

    def __init__(
        self,
        config: RunConfig,
        model: TargetModel,
        quantities: Sequence[QuantityOfInterest] | None = None,
        *,
        threads: int | None = None,
        logger: RunLogger | None = None,
        settings: Config | None = None,
    ):
        self.config = config
        self.model = model
        self.settings = settings or Config()
        self.quantities = list(quantities or default_quantities(model.dimension))
        self.threads = max(1, threads or self.settings.threads)
        self.logger = logger
        self.kernel = KERNELS[config.sampler]
        self.with_gradient = needs_gradient(config.sampler)
        self._executor: ThreadPoolExecutor | None = None

    # ── Worker pool ───────────────────────────────────────────────────────────

    @contextmanager
    def _pool(self):
        if self.threads == 1 or self.config.chains == 1:
            yield
            return
        with ThreadPoolExecutor(max_workers=min(self.threads, self.config.chains)) as executor:
            self._executor = executor
            try:
                yield
            finally:
                self._executor = None

    def _map(self, fn, items: list) -> list:
        if self._executor is None:
            return [fn(item) for item in items]
        return list(self._executor.map(fn, items))

    # ── Phases ────────────────────────────────────────────────────────────────

    def _start(self) -> tuple[list[ChainState], list[TuningState], list[int]]:
        inits = initialize(self.config, self.model)
        states = [
            init_chain_state(self.model, c.position, c.rng, self.with_gradient) for c in inits
        ]
        tuning = init_tuning(
            self.config.sampler,
            self.model.dimension,
            self.config.num_leapfrog_steps,
            self.config.initial_step_size,
            jitter_steps=self.config.jitter_trajectory,
        )
        return states, [tuning] * len(states), [c.group for c in inits]

    def _step(self, item: tuple[ChainState, TuningState]) -> ChainState:
        state, tuning = item
        return self.kernel(self.model, state, tuning)

    def _warmup_chain(self, item: tuple[ChainState, TuningState]):
        state, tuning = item
        num_warmup = self.config.warmup
        draws = np.empty((num_warmup, self.model.dimension))
        grads = np.zeros(num_warmup, dtype=np.int64)
        for window in warmup_schedule(num_warmup):
            for n in range(window.start, window.end):
                state = self.kernel(self.model, state, tuning)
                draws[n] = state.position
                window_end = window.update_metric and n == window.end - 1
                recent = [draws[window.start:window.end]] if window_end else None
                tuning = adapt_update([tuning], recent, [state.last_accept_prob], "per_chain")[0]
                if window_end and self.config.sampler == "hmc":
                    jumps, state = probe_jumps(self.model, state, tuning)
                    steps = select_num_leapfrog_steps([jumps])
                    tuning = tuning.model_copy(update={"num_leapfrog_steps": steps})
                grads[n] = state.gradient_evaluations
        return state, freeze(tuning), draws, grads

    def _warmup_cross_chain(self, states, tunings):
        num_chains, num_warmup = len(states), self.config.warmup
        draws = np.empty((num_chains, num_warmup, self.model.dimension))
        grads = np.zeros((num_chains, num_warmup), dtype=np.int64)
        for window in warmup_schedule(num_warmup):
            for n in range(window.start, window.end):
                states = self._map(self._step, list(zip(states, tunings)))
                draws[:, n] = [s.position for s in states]
                window_end = window.update_metric and n == window.end - 1
                recent = [draws[m, window.start:window.end] for m in range(num_chains)] if window_end else None
                tunings = adapt_update(tunings, recent, [s.last_accept_prob for s in states], "cross_chain")
                if window_end and self.config.sampler == "hmc":
                    states, tunings = self._select_trajectory_length(states, tunings)
                grads[:, n] = [s.gradient_evaluations for s in states]
        shared = freeze(tunings[0])
        return states, [shared] * num_chains, draws, grads

    def _select_trajectory_length(self, states, tunings):
        tuning = tunings[0]
        probes = self._map(lambda s: probe_jumps(self.model, s, tuning), states)
        steps = select_num_leapfrog_steps([jumps for jumps, _ in probes])
        shared = tuning.model_copy(update={"num_leapfrog_steps": steps})
        return [s for _, s in probes], [shared] * len(states)

    def _warmup(self, states, tunings):
        num_chains, num_warmup = len(states), self.config.warmup
        if num_warmup == 0:
            empty = np.empty((num_chains, 0, self.model.dimension))
            return states, [freeze(t) for t in tunings], empty, np.zeros((num_chains, 0), dtype=np.int64)
        if self.config.adaptation == "cross_chain":
            return self._warmup_cross_chain(states, tunings)
        results = self._map(self._warmup_chain, list(zip(states, tunings)))
        return (
            [r[0] for r in results],
            [r[1] for r in results],
            np.stack([r[2] for r in results]),
            np.stack([r[3] for r in results]),
        )

    def _enter_sampling(self, states: list[ChainState]) -> tuple[list[ChainState], list[int]]:
        warmup_divergences = [s.divergences for s in states]
        states = [
            replace(
                s,
                rng_stream=derive_chain_rng(self.config.root_seed, m, "sampling"),
                accept_count=0,
                step_count=0,
                divergences=0,
            )
            for m, s in enumerate(states)
        ]
        return states, warmup_divergences

    def _sample_chain(self, item: tuple[ChainState, TuningState, int]):
        state, tuning, iterations = item
        draws = np.empty((iterations, self.model.dimension))
        for i in range(iterations):
            state = self.kernel(self.model, state, tuning)
            draws[i] = state.position
        return state, draws

    def _sample(self, states, tunings, iterations: int):
        snapshot = [t.model_dump_json() for t in tunings]
        results = self._map(self._sample_chain, [(s, t, iterations) for s, t in zip(states, tunings)])
        if [t.model_dump_json() for t in tunings] != snapshot:
            raise ContractViolationError("tuning changed during the sampling phase")
        return [r[0] for r in results], np.stack([r[1] for r in results])

    # ── Assembly ──────────────────────────────────────────────────────────────

    def _matrix(self, warmup_draws, sampling_draws, groups, states, warmup_divergences) -> ChainMatrix:
        meta = [
            ChainMeta(
                chain=m,
                group=groups[m],
                seed=self.config.root_seed,
                divergences=s.divergences,
                warmup_divergences=warmup_divergences[m],
                acceptance_rate=s.accept_count / s.step_count if s.step_count else 0.0,
                gradient_evaluations=s.gradient_evaluations,
            )
            for m, s in enumerate(states)
        ]
        return ChainMatrix(
            draws=np.concatenate([warmup_draws, sampling_draws], axis=1),
            num_warmup=self.config.warmup,
            group_of_chain=np.asarray(groups),
            chain_meta=meta,
        )

    def _summarize(self, matrix: ChainMatrix) -> DiagnosticsReport:
        return summarize(
            matrix, self.quantities, rhat_threshold=self.config.rhat_threshold, config=self.settings
        )

    def _check_accounting(self, states: list[ChainState], counter_start: int) -> list[int]:
        per_chain = [s.gradient_evaluations for s in states]
        counted = self.model.gradient_evaluations - counter_start
        if counted != sum(per_chain):
            raise ContractViolationError(
                f"gradient accounting mismatch: chains report {sum(per_chain)}, model counted {counted}"
            )
        return per_chain

    def _log(self, event: str, **fields):
        if self.logger is not None:
            self.logger.log(event, model=self.model.name, **fields)

    # ── Public entry points ───────────────────────────────────────────────────

    def run(self) -> RunResult:
        """Fixed budget: `warmup` then `samples` iterations per chain."""
        return self._run(adaptive=False)

    def run_many_short(self) -> RunResult:
        """Many chains with a short (possibly single-draw) sampling phase.

        Diagnostics for fewer than 4 draws per chain fall back to the
        between-chain ESS; split R-hat is reported as undefined.
        """
        if self.config.samples < 1:
            raise InvalidArgumentError("the sampling phase needs at least one iteration")
        return self._run(adaptive=False)

    def run_adaptive(self) -> RunResult:
        """Sample in doubling increments until the ESS and R-hat targets hold."""
        if self.config.target_ess is None:
            raise InvalidArgumentError("run_adaptive needs target_ess")
        if self.config.max_total_iterations is None:
            raise InvalidArgumentError("run_adaptive needs max_total_iterations")
        return self._run(adaptive=True)

    def _run(self, adaptive: bool) -> RunResult:
        config = self.config
        self._log(
            "run_start",
            mode="adaptive" if adaptive else "fixed",
            config=config.model_dump(mode="json"),
            threads=self.threads,
        )
        counter_start = self.model.gradient_evaluations
        density_start = self.model.density_evaluations
        timings: dict[str, float] = {}

        with self._pool():
            t0 = time.perf_counter()
            states, tunings, groups = self._start()
            states, tunings, warmup_draws, warmup_grads = self._warmup(states, tunings)
            t1 = time.perf_counter()
            timings["warmup_seconds"] = t1 - t0

            states, warmup_divergences = self._enter_sampling(states)
            if adaptive:
                states, matrix, report, reason = self._sample_adaptively(
                    states, tunings, warmup_draws, groups, warmup_divergences
                )
                t2 = time.perf_counter()
            else:
                states, sampling_draws = self._sample(states, tunings, config.samples)
                t2 = time.perf_counter()
                matrix = self._matrix(warmup_draws, sampling_draws, groups, states, warmup_divergences)
                report = self._summarize(matrix)
                reason = "fixed-budget"
            timings["sampling_seconds"] = t2 - t1
            timings["diagnostics_seconds"] = time.perf_counter() - t2

        gradient_evaluations = self._check_accounting(states, counter_start)
        flags: list[str] = []
        if reason == "budget-exhausted":
            flags.append("target-not-met")
            if not report.min_ess >= config.target_ess:
                flags.append("low-ess")

        result = RunResult(
            config=config,
            model_name=self.model.name,
            matrix=matrix,
            tunings=tunings,
            gradient_evaluations=gradient_evaluations,
            warmup_gradient_trace=warmup_grads,
            timings=timings,
            report=report,
            stopping_reason=reason,
            flags=flags,
            density_evaluations=self.model.density_evaluations - density_start,
        )
        self._log(
            "run_end",
            stopping_reason=reason,
            num_draws=matrix.num_draws,
            min_ess=report.min_ess,
            max_rhat=report.max_rhat,
            gradient_evaluations=result.total_gradient_evaluations,
            density_evaluations=result.density_evaluations,
            flags=flags + report.flags,
            timings=timings,
        )
        return result

    def _targets_met(self, report: DiagnosticsReport) -> bool:
        if not report.min_ess >= self.config.target_ess:
            return False
        limit = 1.0 + self.config.rhat_threshold
        if report.num_chains >= 2:
            return report.max_rhat <= limit
        return all(q.split_rhat <= limit for q in report.quantities)

    def _sample_adaptively(self, states, tunings, warmup_draws, groups, warmup_divergences):
        budget = self.config.max_total_iterations
        increment = self.settings.adaptive_initial_increment
        chunks: list[np.ndarray] = []
        drawn = 0
        while True:
            iterations = min(increment, budget - drawn)
            states, chunk = self._sample(states, tunings, iterations)
            chunks.append(chunk)
            drawn += iterations
            matrix = self._matrix(
                warmup_draws, np.concatenate(chunks, axis=1), groups, states, warmup_divergences
            )
            report = self._summarize(matrix)
            met = self._targets_met(report)
            self._log(
                "adaptive_increment",
                iterations=iterations,
                total_iterations=drawn,
                min_ess=report.min_ess,
                max_rhat=report.max_rhat,
                targets_met=met,
            )
            if met:
                return states, matrix, report, "target-met"
            if drawn >= budget:
                return states, matrix, report, "budget-exhausted"
            increment *= 2


# ── Module-level conveniences ─────────────────────────────────────────────────

def run(config: RunConfig, model: TargetModel, quantities=None, **kwargs) -> RunResult:
    return ChainRunner(config, model, quantities, **kwargs).run()


def run_many_short(config: RunConfig, model: TargetModel, quantities=None, **kwargs) -> RunResult:
    return ChainRunner(config, model, quantities, **kwargs).run_many_short()


def run_adaptive(config: RunConfig, model: TargetModel, quantities=None, **kwargs) -> RunResult:
    return ChainRunner(config, model, quantities, **kwargs).run_adaptive()


def all_flags(result: RunResult) -> list[str]:
    """Run-level plus report-level flags, deduplicated in order."""
    out: list[str] = []
    for flag in [*result.flags, *result.report.flags]:
        if flag not in out:
            out.append(flag)
    return out

