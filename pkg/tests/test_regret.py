import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from perfmap.coate_loury import MarketModel, conditional_losses, probit_cost_cdf, square_cost_cdf, true_optimum
from perfmap.errors import ArgumentError
from perfmap.regret import (
    ETA,
    ISOTONIC,
    LOGIT,
    ORACLE,
    PROBIT,
    RegretConfig,
    RegretTrace,
    default_alpha,
    episode_schedule,
    estimated_pr,
    fit_growth_exponent,
    market_map,
    run_regret_experiment,
)
from perfmap.rng import stream

MARKET = MarketModel(wage=4.0)


def test_schedule_examples():
    s = episode_schedule(8 + 16, 8, 0.75)
    assert s.lengths == (8, 16)
    assert s.explore == (5, 8)
    assert s.exploit == (3, 8)
    full = episode_schedule(56, 8, 1.0)
    assert full.explore == full.lengths == (8, 16, 32)


@given(st.integers(2, 10**6), st.integers(2, 64), st.floats(0.05, 1.0))
def test_schedule_invariants(total, tau0, alpha):
    if total < tau0:
        with pytest.raises(ArgumentError):
            episode_schedule(total, tau0, alpha)
        return
    s = episode_schedule(total, tau0, alpha)
    assert s.episodes == int(np.floor(np.log2(1 + total // tau0)))
    assert s.deployments <= total
    for k, (j, i) in enumerate(zip(s.lengths, s.explore), start=1):
        assert j == tau0 * 2 ** (k - 1)
        assert 1 <= i <= j
        assert i >= j**alpha - 1e-9


def test_schedule_validation():
    with pytest.raises(ArgumentError):
        episode_schedule(100, 1, 0.5)
    with pytest.raises(ArgumentError):
        episode_schedule(100, 8, 0.0)


def test_default_alpha():
    assert default_alpha(ISOTONIC) == pytest.approx(0.75)
    assert default_alpha(PROBIT) == default_alpha(LOGIT) == pytest.approx(2 / 3)
    assert ETA[ORACLE] == 1.0


def test_estimated_pr_example():
    grid = np.array([0.2, 0.8])
    dmap = lambda th: np.array([[0.9, 0.1], [0.1, 0.9]])
    losses = lambda th: np.array([[1.0, 1.0], [-1.0, -1.0]])
    theta, values = estimated_pr(dmap, losses, grid)
    np.testing.assert_allclose(values, [0.8, -0.8])
    assert theta == 0.8


def test_estimated_pr_constant_picks_smallest():
    grid = np.array([0.6, 0.1, 0.3])
    theta, _ = estimated_pr(lambda th: np.tile([0.5, 0.5], (3, 1)), lambda th: np.ones((2, 3)), grid)
    assert theta == 0.1
    with pytest.raises(ArgumentError):
        estimated_pr(lambda th: th, lambda th: th, [])


@pytest.mark.parametrize("seed", range(20))
def test_oracle_map_reproduces_true_optimum(seed):
    rng = stream(41, seed)
    cdf = probit_cost_cdf(rng.uniform(0.1, 0.9), rng.uniform(0.05, 0.5))
    market = MarketModel(wage=rng.uniform(0.5, 5), cost_cdf=cdf, delta0=rng.uniform(0.2, 2), delta1=rng.uniform(0.2, 2))
    grid = np.linspace(0, 1, 101)
    theta_hat, _ = estimated_pr(market_map(market, market.cost_cdf), lambda th: conditional_losses(market, th), grid)
    assert theta_hat == true_optimum(market, grid)[0]


def test_growth_exponent_examples():
    m = np.arange(1, 1001, dtype=float)
    assert fit_growth_exponent(m) == pytest.approx(1.0)
    assert fit_growth_exponent(np.sqrt(m)) == pytest.approx(0.5)
    noisy = 3 * m**0.75 * (1 + 0.01 * stream(2).standard_normal(m.size))
    assert fit_growth_exponent(noisy) == pytest.approx(0.75, abs=0.02)
    assert fit_growth_exponent(np.zeros(100)) is None
    with pytest.raises(ArgumentError):
        fit_growth_exponent(m[:10])


def _run(estimator, seed, total=1016, **kw):
    cfg = RegretConfig(market=MARKET, total=total, tau0=8, alpha=0.75, estimator=estimator, **kw)
    return run_regret_experiment(cfg, stream(51, seed))


def test_oracle_has_zero_exploitation_regret():
    trace = _run(ORACLE, 0)
    assert trace.exploitation_regret() == 0.0
    exploit = np.array([p == "exploit" for p in trace.phase])
    assert np.all(trace.theta[exploit] == trace.theta_star)


@pytest.mark.parametrize("estimator", [ISOTONIC, PROBIT, LOGIT])
def test_regret_nondecreasing_and_bound_holds(estimator):
    trace = _run(estimator, 1)
    assert np.all(np.diff(trace.regret_cum) >= 0)
    assert trace.regret_cum[0] >= 0
    for d in trace.diagnostics:
        assert d.plug_in_gap <= d.plug_in_bound + 1e-12


def test_regret_trace_layout_and_csv():
    trace = _run(ISOTONIC, 2)
    assert len(trace) == 8 + 16 + 32 + 64 + 128 + 256 + 512
    assert trace.phase[:5] == ["explore"] * 5 and trace.phase[5:8] == ["exploit"] * 3
    lines = trace.to_csv().splitlines()
    assert lines[0] == ",".join(RegretTrace.CSV_COLUMNS)
    assert len(lines) == len(trace) + 1
    assert _run(ISOTONIC, 2).to_csv() == trace.to_csv()


def test_other_market_runs():
    cfg = RegretConfig(market=MarketModel(wage=4.0, cost_cdf=square_cost_cdf), total=120, tau0=8)
    trace = run_regret_experiment(cfg, stream(3))
    assert np.all(np.diff(trace.regret_cum) >= 0)


def test_config_validation():
    with pytest.raises(ArgumentError):
        RegretConfig(market=MARKET, estimator="knn")
    with pytest.raises(ArgumentError):
        RegretConfig(market=MARKET, per_point_n=0)
