import json
import math

import numpy as np
import pytest

from src.engine.initialization import group_points, initialize, overdispersed_scale
from src.engine.rng import derive_chain_rng
from src.engine.run_log import RunLogger
from src.engine.runner import ChainRunner, all_flags, run, run_adaptive, run_many_short
from src.engine.storage import (
    MAGIC,
    load_run_meta,
    read_draws,
    save_run_meta,
    write_draws,
)
from src.errors import InvalidArgumentError, ModelEvaluationError
from src.model.targets import TargetModel, make_gaussian
from src.samplers.adaptation import LEAPFROG_GRID
from src.samplers.kernels import TARGET_ACCEPT
from src.schemas import DiagnosticsReport, QuantitySummary, RunConfig


def flat_model(log_density=0.0):
    return TargetModel("flat", 1, lambda theta: (log_density, np.zeros(1)))


# ── Random streams ────────────────────────────────────────────────────────────

def test_streams_are_reproducible():
    a = derive_chain_rng(42, 3, "warmup").standard_normal(10)
    b = derive_chain_rng(42, 3, "warmup").standard_normal(10)
    assert a.tolist() == b.tolist()


def test_streams_are_distinct():
    first = derive_chain_rng(42, 0).standard_normal(100)
    assert np.sum(first != derive_chain_rng(42, 1).standard_normal(100)) >= 99
    assert np.sum(first != derive_chain_rng(43, 0).standard_normal(100)) >= 99
    assert np.sum(first != derive_chain_rng(42, 0, "warmup").standard_normal(100)) >= 99


def test_stream_arguments_are_checked():
    with pytest.raises(InvalidArgumentError):
        derive_chain_rng(42, -1)
    with pytest.raises(InvalidArgumentError):
        derive_chain_rng(2**64, 0)
    with pytest.raises(InvalidArgumentError):
        derive_chain_rng(42, 0, "burn-in")


# ── Initialization ────────────────────────────────────────────────────────────

def test_groups_share_points_bit_for_bit():
    model = make_gaussian([0.0, 0.0], [1.0, 4.0])
    inits = initialize(RunConfig(chains=8, groups=2, root_seed=5), model)
    assert [c.group for c in inits] == [0, 0, 0, 0, 1, 1, 1, 1]
    for c in inits[1:4]:
        assert c.position.tobytes() == inits[0].position.tobytes()
    assert inits[4].position.tobytes() != inits[0].position.tobytes()


def test_default_config_starts_every_chain_apart():
    inits = initialize(RunConfig(root_seed=7), make_gaussian([0.0], [1.0]))
    assert [c.group for c in inits] == [0, 1, 2, 3]
    assert len({c.position.tobytes() for c in inits}) == 4


def test_single_explicit_group_shares_one_start():
    inits = initialize(RunConfig(groups=1, root_seed=7), make_gaussian([0.0], [1.0]))
    assert [c.group for c in inits] == [0, 0, 0, 0]
    assert len({c.position.tobytes() for c in inits}) == 1


def test_one_chain_per_group_gives_distinct_points():
    inits = initialize(RunConfig(chains=6, groups=6), make_gaussian([0.0], [1.0]))
    assert len({c.position.tobytes() for c in inits}) == 6


def test_overdispersed_spread():
    points = group_points(RunConfig(chains=10_000, groups=10_000, init_scale=3.0), make_gaussian([0.0], [1.0]))
    assert np.std(np.concatenate(points)) == pytest.approx(3.0, rel=0.05)


def test_overdispersed_default_scale():
    assert overdispersed_scale(make_gaussian([0.0, 0.0], [1.0, 9.0])) == 12.0
    assert overdispersed_scale(flat_model()) == 10.0
    assert overdispersed_scale(flat_model(), 2.5) == 2.5


def test_fixed_points_and_exact_checks():
    model = make_gaussian([0.0], [1.0])
    config = RunConfig(chains=4, groups=2, init_strategy="fixed_points", init_points=[[1.0], [-1.0]])
    assert [c.position.tolist() for c in initialize(config, model)] == [[1.0], [1.0], [-1.0], [-1.0]]
    with pytest.raises(InvalidArgumentError):
        group_points(config.model_copy(update={"init_points": [[1.0]]}), model)
    with pytest.raises(InvalidArgumentError):
        group_points(config.model_copy(update={"init_points": [[1.0, 2.0], [0.0, 0.0]]}), model)
    with pytest.raises(InvalidArgumentError):
        group_points(RunConfig(init_strategy="exact"), flat_model())


def test_groups_must_divide_chains():
    with pytest.raises(ValueError):
        RunConfig(chains=6, groups=4)


# ── Runs ──────────────────────────────────────────────────────────────────────

def test_gaussian_run_recovers_the_mean(settings):
    model = make_gaussian([0.0], [1.0])
    result = run(RunConfig(chains=4, warmup=1000, samples=1000, root_seed=1), model, settings=settings)
    assert result.matrix.draws.shape == (4, 2000, 1)
    row = result.report.get("theta[0]")
    assert abs(row.mean) <= 4 * row.mcse
    assert result.stopping_reason == "fixed-budget"
    assert all(t.frozen for t in result.tunings)
    assert result.report.num_groups == 4
    assert row.nested_rhat is None


@pytest.mark.parametrize("adaptation", ["per_chain", "cross_chain"])
def test_draws_do_not_depend_on_threads(adaptation, settings):
    config = RunConfig(chains=4, warmup=150, samples=50, adaptation=adaptation, root_seed=9)
    one = run(config, make_gaussian([1.0, -1.0], [1.0, 4.0]), threads=1, settings=settings)
    four = run(config, make_gaussian([1.0, -1.0], [1.0, 4.0]), threads=4, settings=settings)
    assert one.matrix.draws.tobytes() == four.matrix.draws.tobytes()
    assert one.gradient_evaluations == four.gradient_evaluations


def test_cross_chain_tuning_is_shared(settings):
    config = RunConfig(chains=4, warmup=150, samples=20, adaptation="cross_chain")
    result = run(config, make_gaussian([0.0, 0.0], [1.0, 100.0]), settings=settings)
    assert all(t == result.tunings[0] for t in result.tunings)
    assert result.tunings[0].num_leapfrog_steps in LEAPFROG_GRID
    assert result.warmup_gradient_trace.shape == (4, 150)
    assert np.all(np.diff(result.warmup_gradient_trace, axis=1) >= 0)


def test_per_chain_hmc_picks_its_own_trajectory_length(settings):
    config = RunConfig(chains=3, warmup=150, samples=20, root_seed=4)
    result = run(config, make_gaussian([0.0, 0.0], [1.0, 100.0]), settings=settings)
    assert all(t.num_leapfrog_steps in LEAPFROG_GRID for t in result.tunings)
    assert all(t.jitter_steps for t in result.tunings)
    # three windows end before the terminal one, each costing one grid sweep
    per_window = sum(LEAPFROG_GRID)
    assert all(g >= 3 * per_window + 150 for g in result.warmup_gradient_trace[:, -1])


def test_jitter_can_be_switched_off(settings):
    config = RunConfig(chains=2, warmup=0, samples=10, num_leapfrog_steps=4, jitter_trajectory=False)
    result = run(config, make_gaussian([0.0], [1.0]), settings=settings)
    assert not result.tunings[0].jitter_steps
    # one gradient at the start, then four per transition
    assert result.gradient_evaluations == [1 + 10 * 4] * 2


def test_density_evaluations_are_recorded(settings):
    model = make_gaussian([0.0, 0.0], [1.0, 2.0])
    config = RunConfig(chains=2, warmup=20, samples=30, sampler="rwm")
    result = run(config, model, settings=settings)
    assert result.total_gradient_evaluations == 0
    assert result.density_evaluations == 2 * (1 + 20 + 30) == model.density_evaluations
    assert result.meta()["density_evaluations"] == result.density_evaluations


@pytest.mark.parametrize("sampler", ["rwm", "mala", "hmc"])
def test_gradient_accounting(sampler, settings):
    model = make_gaussian([0.0, 0.0, 0.0], [1.0, 2.0, 3.0])
    result = run(RunConfig(chains=3, warmup=120, samples=30, sampler=sampler), model, threads=2, settings=settings)
    assert result.total_gradient_evaluations == model.gradient_evaluations
    if sampler == "rwm":
        assert result.total_gradient_evaluations == 0
    else:
        assert all(g > 0 for g in result.gradient_evaluations)


@pytest.mark.parametrize("sampler", ["rwm", "mala", "hmc"])
def test_acceptance_tracks_target(sampler, settings):
    model = make_gaussian(np.zeros(10), np.ones(10))
    result = run(RunConfig(chains=2, warmup=1000, samples=1000, sampler=sampler, root_seed=3), model, settings=settings)
    rates = [meta.acceptance_rate for meta in result.matrix.chain_meta]
    assert abs(np.mean(rates) - TARGET_ACCEPT[sampler]) < 0.1


def test_bad_initial_point_raises(settings):
    config = RunConfig(chains=2, warmup=10, samples=10, groups=1, init_strategy="fixed_points", init_points=[[0.5]])
    with pytest.raises(ModelEvaluationError) as info:
        run(config, flat_model(-math.inf), settings=settings)
    assert list(info.value.theta) == [0.5]


def test_many_single_draw_chains(settings):
    config = RunConfig(chains=1000, groups=1000, warmup=0, samples=1, init_strategy="exact")
    result = run_many_short(config, make_gaussian([0.0], [1.0]), settings=settings)
    row = result.report.get("theta[0]")
    assert row.ess == 1000.0
    assert "split-rhat-undefined" in row.flags
    assert row.nested_rhat is None


# ── Adaptive stopping ─────────────────────────────────────────────────────────

def _fixed_report(ess, rhat):
    row = QuantitySummary(
        quantity="theta[0]", mean=0.0, chain_means=[0.0, 0.0], sd=1.0, q05=-1.6, q50=0.0, q95=1.6,
        bhat=0.0, what=1.0, rhat=rhat, split_rhat=rhat, ess=ess, mcse=1.0 / math.sqrt(ess),
    )
    return DiagnosticsReport(quantities=[row], num_chains=2, num_draws=100, num_groups=1)


def test_targets_met_logic(settings):
    runner = ChainRunner(RunConfig(chains=2, target_ess=100, max_total_iterations=1000), flat_model(), settings=settings)
    assert runner._targets_met(_fixed_report(150, 1.005))
    assert not runner._targets_met(_fixed_report(150, 1.02))
    assert not runner._targets_met(_fixed_report(50, 1.0))


def test_adaptive_stops_after_first_increment(settings, monkeypatch):
    monkeypatch.setattr("src.engine.runner.summarize", lambda *args, **kwargs: _fixed_report(150, 1.005))
    config = RunConfig(chains=2, warmup=100, target_ess=100, max_total_iterations=10_000)
    result = run_adaptive(config, make_gaussian([0.0], [1.0]), settings=settings)
    assert result.stopping_reason == "target-met"
    assert result.matrix.num_draws == settings.adaptive_initial_increment


def test_adaptive_budget_exhausted(settings):
    config = RunConfig(chains=2, warmup=100, target_ess=1e6, max_total_iterations=150)
    result = run_adaptive(config, make_gaussian([0.0], [1.0]), settings=settings)
    assert result.stopping_reason == "budget-exhausted"
    assert result.matrix.num_draws == 150
    assert result.flags == ["target-not-met", "low-ess"]
    assert "target-not-met" in all_flags(result)


def test_adaptive_needs_targets(settings):
    with pytest.raises(InvalidArgumentError):
        run_adaptive(RunConfig(max_total_iterations=100), flat_model(), settings=settings)
    with pytest.raises(InvalidArgumentError):
        run_adaptive(RunConfig(target_ess=100), flat_model(), settings=settings)


def test_adaptive_reaches_ess_target(settings):
    logger = RunLogger(settings.log_path)
    config = RunConfig(chains=4, warmup=1000, target_ess=400, max_total_iterations=10_000, root_seed=17)
    result = run_adaptive(config, make_gaussian(np.zeros(10), np.ones(10)), logger=logger, settings=settings)
    assert result.stopping_reason == "target-met"
    assert result.report.min_ess >= 400
    assert result.report.max_rhat <= 1.01
    assert all_flags(result) == []
    events = [e["event"] for e in logger.read()]
    assert events[0] == "run_start" and events[-1] == "run_end"
    assert "adaptive_increment" in events


@pytest.mark.slow
def test_stationary_starts_pass_rhat(settings):
    passed = 0
    for seed in range(100):
        config = RunConfig(
            chains=4, groups=4, warmup=0, samples=1000, sampler="rwm",
            init_strategy="exact", initial_step_size=2.38, root_seed=seed,
        )
        passed += run(config, make_gaussian([0.0], [1.0]), settings=settings).report.max_rhat < 1.01
    assert passed >= 95


@pytest.mark.slow
def test_many_warmed_single_draws_are_unbiased(settings):
    misses = 0
    for seed in range(50):
        config = RunConfig(
            chains=1000, groups=1000, warmup=100, samples=1, num_leapfrog_steps=4, root_seed=seed
        )
        result = run_many_short(config, make_gaussian([0.0], [1.0]), settings=settings)
        misses += abs(result.report.get("theta[0]").mean) > 4 / math.sqrt(1000)
    assert misses <= 2


# ── Storage and logging ───────────────────────────────────────────────────────

@pytest.fixture
def small_result(settings):
    config = RunConfig(chains=2, groups=2, warmup=110, samples=40, root_seed=2)
    return run(config, make_gaussian([0.0, 3.0], [1.0, 2.0]), settings=settings)


def test_csv_draws_round_trip(small_result, tmp_path):
    path = write_draws(small_result.matrix, tmp_path)
    header = path.read_text().splitlines()[0]
    assert header == "chain,group,phase,iter,dim_0,dim_1"
    back = read_draws(path)
    assert back.draws.tobytes() == small_result.matrix.draws.tobytes()
    assert back.num_warmup == 110
    assert back.group_of_chain.tolist() == [0, 1]


def test_binary_draws_round_trip(small_result, tmp_path):
    path = write_draws(small_result.matrix, tmp_path, "bin")
    assert path.read_bytes()[:8] == MAGIC
    back = read_draws(path)
    assert back.draws.tobytes() == small_result.matrix.draws.tobytes()
    assert back.chain_meta == small_result.matrix.chain_meta


def test_binary_header_is_checked(small_result, tmp_path):
    path = write_draws(small_result.matrix, tmp_path, "bin")
    path.write_bytes(b"NOTDRAWS" + path.read_bytes()[8:])
    with pytest.raises(InvalidArgumentError):
        read_draws(path)
    with pytest.raises(InvalidArgumentError):
        read_draws(tmp_path / "missing.csv")


def test_csv_reader_picks_up_chain_meta(small_result, tmp_path):
    path = write_draws(small_result.matrix, tmp_path)
    save_run_meta(small_result.meta(), tmp_path)
    assert read_draws(path).chain_meta == small_result.matrix.chain_meta


def test_run_meta_writes_null_for_nan(tmp_path):
    path = save_run_meta({"max_rhat": math.nan, "values": [1.0, math.inf]}, tmp_path)
    assert load_run_meta(path) == {"max_rhat": None, "values": [1.0, None]}


def test_run_logger_appends_events(tmp_path):
    logger = RunLogger(tmp_path / "logs" / "events.jsonl")
    logger.log("run_start", seed=1)
    logger.log("run_end", min_ess=math.nan)
    lines = (tmp_path / "logs" / "events.jsonl").read_text().splitlines()
    assert [json.loads(line)["event"] for line in lines] == ["run_start", "run_end"]
    assert logger.read()[1]["min_ess"] is None
    assert "timestamp" in logger.read()[0]


def test_run_logger_and_run_meta_share_one_scrubber(tmp_path):
    logger = RunLogger(tmp_path / "events.jsonl")
    logger.log("sweep_cell_done", grad=np.float64(12.5), count=np.int64(3), rhat=np.float64("nan"), out=tmp_path)
    entry = logger.read()[0]
    assert (entry["grad"], entry["count"], entry["rhat"], entry["out"]) == (12.5, 3, None, str(tmp_path))
    meta = load_run_meta(save_run_meta({"grad": np.float64(12.5), "rhat": np.float64("inf")}, tmp_path))
    assert meta == {"grad": 12.5, "rhat": None}
