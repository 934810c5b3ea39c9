import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from perfmap.coate_loury import (
    MarketModel,
    ScoreDistribution,
    conditional_losses,
    incentive,
    incentive_curve,
    performative_risk,
    probit_cost_cdf,
    realized_loss,
    simulate_market,
    skilled_proportion,
    square_cost_cdf,
    threshold_for_incentive,
    true_optimum,
)
from perfmap.errors import ArgumentError, RangeError
from perfmap.rng import stream

DEFAULT = MarketModel()
WIDE = MarketModel(wage=4.0)


def test_incentive_examples():
    assert incentive(DEFAULT, 0.0) == 0.0
    assert incentive(DEFAULT, 1.0) == 0.0
    assert incentive(DEFAULT, 0.5) == pytest.approx(0.25)


def test_skilled_proportion_examples():
    assert skilled_proportion(DEFAULT, 0.5) == pytest.approx(0.25)
    assert skilled_proportion(DEFAULT, 0.0) == 0.0
    square = MarketModel(cost_cdf=square_cost_cdf)
    assert skilled_proportion(square, 0.5) == pytest.approx(0.0625)


def test_performative_risk_examples():
    np.testing.assert_allclose(performative_risk(DEFAULT, np.array([0.0, 0.5, 1.0])), [1.0, 0.1875, 0.0])


def test_losses_match_risk_decomposition():
    theta = np.linspace(0, 1, 11)
    pi = skilled_proportion(DEFAULT, theta)
    l0, l1 = conditional_losses(DEFAULT, theta)
    np.testing.assert_allclose(performative_risk(DEFAULT, theta), pi * l1 + (1 - pi) * l0)


def test_threshold_examples():
    assert threshold_for_incentive(WIDE, 0.0) == 0.0
    assert threshold_for_incentive(WIDE, 1.0) == pytest.approx(0.5, abs=1e-4)
    with pytest.raises(RangeError):
        threshold_for_incentive(WIDE, 1.2)
    with pytest.raises(RangeError):
        threshold_for_incentive(WIDE, -0.1)


def test_curve_peak_and_range():
    curve = incentive_curve(WIDE)
    assert curve.peak == pytest.approx(0.5, abs=1e-6)
    assert curve.range_max == pytest.approx(1.0, abs=1e-12)
    assert WIDE.b_max == curve.range_max


@given(st.floats(0.0, 0.499))
def test_threshold_inverts_incentive_on_increasing_branch(theta):
    # bounded away from the vertex, where I' = 0 makes the inverse ill-conditioned
    assert threshold_for_incentive(WIDE, incentive(WIDE, theta)) == pytest.approx(theta, abs=1e-8)


@given(st.floats(0, 1), st.floats(0, 1))
def test_proportion_monotone_in_incentive(t1, t2):
    market = MarketModel(wage=2.0, cost_cdf=probit_cost_cdf(0.2, 0.1))
    if incentive(market, t1) <= incentive(market, t2):
        assert skilled_proportion(market, t1) <= skilled_proportion(market, t2)


def test_simulate_market_extremes_and_mean():
    rng = stream(11)
    _, a = simulate_market(DEFAULT, 0.0, 1000, rng)
    assert np.all(a == 0)
    always = MarketModel(cost_cdf=lambda x: np.ones_like(np.asarray(x, dtype=float)))
    _, a = simulate_market(always, 0.3, 1000, rng)
    assert np.all(a == 1)
    _, a = simulate_market(DEFAULT, 0.5, 100_000, rng)
    assert abs(a.mean() - 0.25) < 0.01


@pytest.mark.parametrize("theta", [0.1, 0.3, 0.5, 0.7, 0.9])
def test_risk_matches_simulated_loss(theta):
    scores, actions = simulate_market(WIDE, theta, 100_000, stream(12, int(theta * 10)))
    loss = realized_loss(WIDE, theta, scores, actions)
    se = loss.std(ddof=1) / np.sqrt(loss.size)
    assert abs(loss.mean() - performative_risk(WIDE, theta)) < 3 * se


def test_true_optimum_examples():
    assert true_optimum(DEFAULT, [0.0, 0.5, 1.0]) == (1.0, 0.0)
    assert true_optimum(DEFAULT, [0.3])[0] == 0.3
    with pytest.raises(ArgumentError):
        true_optimum(DEFAULT, [])


def test_true_optimum_constant_risk_picks_smallest_threshold():
    # scores always above any threshold: zero incentive and constant risk delta0
    top = ScoreDistribution(cdf=lambda x: np.zeros_like(np.asarray(x, dtype=float)), ppf=lambda u: np.ones_like(u))
    market = MarketModel(skilled=top, unskilled=top)
    grid = np.array([0.7, 0.2, 0.5])
    np.testing.assert_allclose(performative_risk(market, grid), 1.0)
    assert true_optimum(market, grid) == (0.2, 1.0)


def test_argument_validation():
    with pytest.raises(ArgumentError):
        MarketModel(wage=0.0)
    with pytest.raises(ArgumentError):
        incentive(DEFAULT, 1.5)
    with pytest.raises(ArgumentError):
        simulate_market(DEFAULT, 0.5, 0, stream(0))
