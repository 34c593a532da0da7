import math

import numpy as np
import pytest
from scipy import stats
from scipy.stats import norm

from src.errors import ContractViolationError, InvalidArgumentError
from src.oracle import ou
from src.oracle.ou import (
    indicator_bias,
    normal_crossings,
    ou_exact_step,
    ou_marginal,
    ou_time_average,
    relaxation_time,
    simulate_ou,
    tv_normal,
    tv_normal_equal_sd,
    tv_to_stationary,
)
from src.oracle.studies import (
    decay_slope,
    error_decomposition,
    measured_ess_per_draw,
    ou_decay_table,
    simulate_ou_decay,
    simulate_two_state,
    two_state_analytics,
    two_state_table,
    variance_decomposition,
)
from src.schemas import OUProcessSpec, ReplicateStudy

WIDE_START = OUProcessSpec(mu0=2.0, sigma0=3.0, mu=0.0, sigma=1.0)
POINT_START = OUProcessSpec(mu0=2.0, sigma0=1.0, mu=0.0, sigma=1.0)


# ── Marginals and transitions ─────────────────────────────────────────────────

def test_marginal_fixtures():
    assert ou_marginal(WIDE_START, 0.0) == (2.0, 3.0)
    mean, sd = ou_marginal(WIDE_START, math.log(2.0))
    assert mean == pytest.approx(1.0, rel=1e-14)
    assert sd == pytest.approx(math.sqrt(3.0), rel=1e-14)
    mean, sd = ou_marginal(WIDE_START, 50.0)
    assert mean == pytest.approx(0.0, abs=1e-15)
    assert sd == pytest.approx(1.0, rel=1e-14)
    with pytest.raises(InvalidArgumentError):
        ou_marginal(WIDE_START, -0.1)


def test_exact_step_moments(rng):
    spec = OUProcessSpec(mu0=0.0, sigma0=1.0, mu=0.0, sigma=1.0)
    out = ou_exact_step(spec, np.full(100_000, 2.0), math.log(2.0), rng)
    assert abs(out.mean() - 1.0) < 4 * math.sqrt(0.75) / math.sqrt(100_000)
    assert out.std() == pytest.approx(math.sqrt(0.75), rel=0.01)


def test_exact_step_edges(rng):
    assert isinstance(ou_exact_step(POINT_START, 0.3, 1.0, rng), float)
    assert ou_exact_step(POINT_START, 0.3, 1e-14, rng) == pytest.approx(0.3, abs=1e-6)
    with pytest.raises(InvalidArgumentError):
        ou_exact_step(POINT_START, 0.3, 0.0, rng)


def test_simulated_marginal_mean(rng):
    values = simulate_ou(WIDE_START, [math.log(2.0)], 100_000, rng)[0]
    assert abs(values.mean() - 1.0) < 4 * math.sqrt(3.0) / math.sqrt(100_000)


def test_simulated_marginals_pass_ks(rng):
    times = [0.25, 1.0, 2.0]
    paths = simulate_ou(WIDE_START, times, 100_000, rng)
    for t, values in zip(times, paths):
        mean, sd = ou_marginal(WIDE_START, t)
        assert stats.kstest(values, "norm", args=(mean, sd)).pvalue > 0.001


def test_simulate_rejects_unsorted_times(rng):
    with pytest.raises(InvalidArgumentError):
        simulate_ou(WIDE_START, [1.0, 0.5], 10, rng)


def test_time_average_is_near_stationary_mean(rng):
    averages = ou_time_average(POINT_START, 50.0, 200, rng, step=0.05)
    assert abs(averages.mean()) < 0.1


# ── Total variation ───────────────────────────────────────────────────────────

def test_tv_fixtures():
    assert tv_normal(0.0, 1.0, 0.0, 1.0) == 0.0
    assert tv_normal(0.0, 1.0, 1.0, 1.0) == pytest.approx(2 * norm.cdf(0.5) - 1, abs=1e-8)
    c = math.sqrt(8.0 * math.log(2.0) / 3.0)
    closed = (2 * norm.cdf(c) - 1) - (2 * norm.cdf(c / 2) - 1)
    assert tv_normal(0.0, 1.0, 0.0, 2.0) == pytest.approx(closed, abs=1e-8)
    assert tv_normal(0.0, 1.0, 0.0, 2.0) == pytest.approx(0.3229, abs=1e-3)


def test_crossings():
    assert normal_crossings(0.0, 1.0, 0.0, 1.0) == []
    assert normal_crossings(0.0, 1.0, 2.0, 1.0) == [1.0]
    c = math.sqrt(8.0 * math.log(2.0) / 3.0)
    np.testing.assert_allclose(normal_crossings(0.0, 1.0, 0.0, 2.0), [-c, c], rtol=1e-12)


def test_tv_properties(rng):
    for _ in range(30):
        m1, m2, m3 = rng.normal(0, 2, 3)
        s1, s2, s3 = rng.uniform(0.3, 3.0, 3)
        d12 = tv_normal(m1, s1, m2, s2)
        assert 0.0 <= d12 <= 1.0
        assert d12 == pytest.approx(tv_normal(m2, s2, m1, s1), abs=1e-12)
        assert tv_normal(m1, s1, m3, s3) <= d12 + tv_normal(m2, s2, m3, s3) + 1e-8
        assert tv_normal(m1, s1, m2, s1) == pytest.approx(tv_normal_equal_sd(m1, m2, s1), abs=1e-8)


def test_tv_equal_sd_is_cross_checked(monkeypatch):
    assert tv_normal(0.5, 2.0, -1.0, 2.0) == pytest.approx(tv_normal_equal_sd(0.5, -1.0, 2.0), abs=1e-8)
    monkeypatch.setattr(ou, "tv_normal_equal_sd", lambda mean1, mean2, sd: 0.9)
    with pytest.raises(ContractViolationError):
        tv_normal(0.0, 1.0, 1.0, 1.0)
    # unequal sds never consult the closed form
    assert tv_normal(0.0, 1.0, 0.0, 2.0) == pytest.approx(0.3229, abs=1e-3)


def test_tv_rejects_bad_sd():
    with pytest.raises(InvalidArgumentError):
        tv_normal(0.0, 0.0, 0.0, 1.0)


def test_tv_to_stationary_decreases():
    values = [tv_to_stationary(WIDE_START, t) for t in np.linspace(0.0, 6.0, 25)]
    assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))
    point_mass = OUProcessSpec(mu0=1.0, sigma0=0.0, mu=0.0, sigma=1.0)
    assert tv_to_stationary(point_mass, 0.0) == 1.0


def test_relaxation_time():
    assert relaxation_time(OUProcessSpec(mu0=0.0, sigma0=1.0), 0.1) == 0.0
    expected = -math.log(norm.ppf(0.55))
    assert relaxation_time(POINT_START, 0.1) == pytest.approx(expected, abs=1e-6)
    assert relaxation_time(POINT_START, 0.999) == 0.0
    with pytest.raises(InvalidArgumentError):
        relaxation_time(POINT_START, 1.5)


def test_indicator_bias_is_bounded_by_tv():
    for t in np.linspace(0.0, 4.0, 9):
        tv = tv_to_stationary(WIDE_START, t)
        for x in np.linspace(-4.0, 6.0, 21):
            assert indicator_bias(WIDE_START, t, x) <= tv + 1e-8


# ── Replicate decompositions ──────────────────────────────────────────────────

def test_error_decomposition_fixtures(rng):
    assert error_decomposition(ReplicateStudy(estimates=[1.0, 1.0, 1.0]), 1.0) == (0.0, 0.0, 0.0)
    assert error_decomposition(ReplicateStudy(estimates=[0.0, 2.0]), 0.0) == (2.0, 1.0, 2.0)
    x = rng.normal(0.3, 1.0, 50)
    mse, bias2, variance = error_decomposition(ReplicateStudy(estimates=x.tolist()), 0.0)
    assert mse == pytest.approx(bias2 + variance * 49 / 50, rel=1e-12)


def test_variance_decomposition_fixture():
    study = ReplicateStudy(estimates=[1.0, 3.0, 2.0, 4.0], groups=[0, 0, 1, 1])
    assert variance_decomposition(study) == (0.5, 2.0, 2.5)


def test_variance_decomposition_needs_groups():
    with pytest.raises(InvalidArgumentError):
        variance_decomposition(ReplicateStudy(estimates=[1.0, 2.0]))
    with pytest.raises(InvalidArgumentError):
        variance_decomposition(ReplicateStudy(estimates=[1.0, 2.0, 3.0], groups=[0, 0, 1]))
    with pytest.raises(ValueError):
        ReplicateStudy(estimates=[1.0])


def test_ou_decay_table_is_analytic():
    t_grid = [0.0, 0.5, 1.0, 2.0, 3.0]
    table = ou_decay_table(POINT_START, t_grid)
    assert list(table["t"]) == t_grid
    np.testing.assert_allclose(table["bias"], 2.0 * np.exp(-np.array(t_grid)), rtol=1e-12)
    np.testing.assert_allclose(table["persistent_var"], 1.0 - np.exp(-2.0 * np.array(t_grid)), atol=1e-15)
    assert table["tv"].iloc[0] == pytest.approx(tv_normal(2.0, 1.0, 0.0, 1.0), abs=1e-12)
    assert decay_slope(t_grid[1:], table["squared_bias"].iloc[1:]) == pytest.approx(-2.0, rel=1e-9)


@pytest.mark.slow
def test_simulated_decay_rates():
    spec = OUProcessSpec(mu0=2.0, sigma0=2.0, mu=0.0, sigma=1.0)
    t_grid = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0]
    table = simulate_ou_decay(spec, t_grid, groups=1000, replicates=1000, root_seed=0, threads=2)
    assert decay_slope(t_grid, table["squared_bias"]) == pytest.approx(-2.0, rel=0.1)
    assert decay_slope(t_grid, table["nonstationary_var"]) == pytest.approx(-2.0, rel=0.1)
    np.testing.assert_allclose(table["persistent_var"], 1.0 - np.exp(-2.0 * np.array(t_grid)), rtol=0.02)


# ── Two-state chain ───────────────────────────────────────────────────────────

@pytest.mark.parametrize(
    "q, ess_per_draw, decay", [(0.5, 1.0, 0.0), (0.1, 1 / 9, 0.8), (0.9, 9.0, 0.8)]
)
def test_two_state_analytics(q, ess_per_draw, decay):
    analytic, factor = two_state_analytics(q)
    assert analytic == pytest.approx(ess_per_draw, rel=1e-12)
    assert factor == pytest.approx(decay, abs=1e-15)


def test_two_state_edges(rng):
    assert two_state_analytics(1.0)[0] == math.inf
    with pytest.raises(InvalidArgumentError):
        two_state_analytics(0.0)
    assert simulate_two_state(1.0, 6, rng).tolist() in ([0, 1, 0, 1, 0, 1], [1, 0, 1, 0, 1, 0])


@pytest.mark.parametrize("q", [0.3, 0.5, 0.7])
def test_two_state_measured_ess(q):
    measured = measured_ess_per_draw(q, 1_000_000, np.random.default_rng(int(q * 10)))
    assert measured == pytest.approx(two_state_analytics(q)[0], rel=0.1)


def test_two_state_table_is_thread_independent():
    one = two_state_table([0.2, 0.6], 10_000, root_seed=4, threads=1)
    two = two_state_table([0.2, 0.6], 10_000, root_seed=4, threads=2)
    assert one.equals(two)
    assert list(one.columns) == ["q", "ess_per_draw_analytic", "ess_per_draw_measured", "tv_decay_factor"]


def test_fastest_mixing_is_not_most_efficient():
    table = two_state_table([0.3, 0.5, 0.7], 100_000, root_seed=1)
    assert table.loc[table["tv_decay_factor"].idxmin(), "q"] == 0.5
    assert table.loc[table["ess_per_draw_analytic"].idxmax(), "q"] == 0.7
