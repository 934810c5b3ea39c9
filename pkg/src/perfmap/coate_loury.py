"""Coate-Loury labor market: ground truth for design and regret simulations.

Workers see a hiring threshold ``theta`` and invest in skill (action 1) when
their cost is below the wage incentive ``I(theta) = w * (S1(theta) - S0(theta))``
where ``S_a`` is the score survival function of a worker with skill ``a``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from scipy import optimize, stats

from perfmap.core import ActionSpace, BenefitProfile
from perfmap.errors import ArgumentError, RangeError


@dataclass(frozen=True)
class ScoreDistribution:
    """Score law on ``[0, 1]`` given by its CDF and quantile function."""

    cdf: Callable
    ppf: Callable
    name: str = ""

    def survival(self, theta):
        return 1.0 - self.cdf(theta)


def power_scores(k: float) -> ScoreDistribution:
    """Scores with CDF ``x**k`` (``k=2`` is Beta(2, 1), ``k=1`` is uniform)."""
    return ScoreDistribution(
        cdf=lambda x: np.asarray(x, dtype=float) ** k,
        ppf=lambda u: np.asarray(u, dtype=float) ** (1.0 / k),
        name=f"power({k:g})",
    )


def uniform_cost_cdf(x):
    return np.clip(np.asarray(x, dtype=float), 0.0, 1.0)


def square_cost_cdf(x):
    return np.clip(np.asarray(x, dtype=float), 0.0, 1.0) ** 2


def probit_cost_cdf(mu: float = 0.5, sigma: float = 0.15) -> Callable:
    return lambda x: stats.norm.cdf((np.asarray(x, dtype=float) - mu) / sigma)


COST_CDFS = {
    "uniform": lambda: uniform_cost_cdf,
    "square": lambda: square_cost_cdf,
    "probit": probit_cost_cdf,
}


@dataclass(frozen=True)
class IncentiveCurve:
    eval: Callable
    range_max: float
    peak: float
    inverse: Callable


@dataclass(frozen=True)
class MarketModel:
    """Coate-Loury market specification.

    ``delta0`` is the loss from hiring an unskilled worker and ``delta1`` the
    gain from hiring a skilled one.
    """

    wage: float = 1.0
    skilled: ScoreDistribution = field(default_factory=lambda: power_scores(2.0))
    unskilled: ScoreDistribution = field(default_factory=lambda: power_scores(1.0))
    cost_cdf: Callable = uniform_cost_cdf
    delta0: float = 1.0
    delta1: float = 1.0

    def __post_init__(self):
        if not self.wage > 0:
            raise ArgumentError(f"wage must be positive, got {self.wage}")
        if not (self.delta0 > 0 and self.delta1 > 0):
            raise ArgumentError("delta0 and delta1 must be positive")

    def survival_skilled(self, theta):
        return self.skilled.survival(theta)

    def survival_unskilled(self, theta):
        return self.unskilled.survival(theta)

    @cached_property
    def curve(self) -> IncentiveCurve:
        return _compute_curve(self)

    @property
    def b_max(self) -> float:
        """Largest attainable incentive; design densities live on ``[0, b_max]``."""
        return self.curve.range_max

    def benefit_profile(self) -> BenefitProfile:
        """Benefits ``B_a(theta) = w * S_a(theta)``, with the threshold inverse attached."""
        return BenefitProfile(
            action_space=ActionSpace(2),
            eval=lambda theta: self.wage
            * np.array([self.survival_unskilled(theta), self.survival_skilled(theta)], dtype=float),
            inverse=lambda b: threshold_for_incentive(self, b),
        )


def _check_theta(theta):
    arr = np.asarray(theta, dtype=float)
    if np.any(arr < 0) or np.any(arr > 1) or np.any(np.isnan(arr)):
        raise ArgumentError(f"theta must lie in [0, 1], got {theta!r}")
    return arr


def _incentive(market: MarketModel, theta):
    return market.wage * (market.survival_skilled(theta) - market.survival_unskilled(theta))


def incentive(market: MarketModel, theta):
    theta = _check_theta(theta)
    return _incentive(market, theta)


def skilled_proportion(market: MarketModel, theta):
    theta = _check_theta(theta)
    return np.clip(market.cost_cdf(_incentive(market, theta)), 0.0, 1.0)


def conditional_losses(market: MarketModel, theta) -> np.ndarray:
    """``E[loss | A=a]`` for ``a = 0, 1``, stacked along the first axis."""
    theta = _check_theta(theta)
    return np.stack(
        [
            market.delta0 * market.survival_unskilled(theta),
            -market.delta1 * market.survival_skilled(theta),
        ]
    )


def performative_risk(market: MarketModel, theta):
    pi = skilled_proportion(market, theta)
    loss0, loss1 = conditional_losses(market, theta)
    return pi * loss1 + (1.0 - pi) * loss0


_CURVE_GRID = 4097


def incentive_curve(market: MarketModel) -> IncentiveCurve:
    return market.curve


def _compute_curve(market: MarketModel) -> IncentiveCurve:
    """Peak and range of the (unimodal) incentive curve, found on a grid then refined."""
    grid = np.linspace(0.0, 1.0, _CURVE_GRID)
    values = _incentive(market, grid)
    i = int(np.argmax(values))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, _CURVE_GRID - 1)]
    res = optimize.minimize_scalar(
        lambda t: -float(_incentive(market, t)),
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-12},
    )
    peak, top = float(grid[i]), float(values[i])
    if -res.fun > top:
        peak, top = float(res.x), float(-res.fun)
    return IncentiveCurve(
        eval=lambda theta: incentive(market, theta),
        range_max=top,
        peak=peak,
        inverse=lambda b: threshold_for_incentive(market, b),
    )


def threshold_for_incentive(market: MarketModel, b, tol: float = 1e-10):
    """Smallest threshold whose incentive equals ``b`` (vectorized bisection).

    Bisection runs on ``[0, peak]`` until the bracket is below machine
    resolution, which also drives ``|I(theta) - b|`` under ``tol``.
    """
    curve = incentive_curve(market)
    b_arr = np.asarray(b, dtype=float)
    if np.any(b_arr < -tol) or np.any(np.isnan(b_arr)):
        raise RangeError(f"incentive target must be >= 0, got {b!r}")
    if np.any(b_arr > curve.range_max + tol):
        raise RangeError(f"incentive target {b!r} exceeds the attainable maximum {curve.range_max:.12g}")
    target = np.clip(b_arr, 0.0, curve.range_max)
    lo = np.zeros_like(target)
    hi = np.full_like(target, curve.peak)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        above = _incentive(market, mid) >= target
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
        if np.all(hi - lo <= 1e-15):
            break
    out = np.where(target <= 0.0, 0.0, hi)
    if np.any(np.abs(_incentive(market, out) - target) > tol):
        worst = float(np.max(np.abs(_incentive(market, out) - target)))
        raise RangeError(f"bisection missed the incentive target by {worst:.3g}")
    return out if out.ndim else float(out)


def simulate_market(market: MarketModel, theta: float, n: int, rng: np.random.Generator):
    """Draw ``n`` workers as ``(scores, actions)`` arrays."""
    if n < 1:
        raise ArgumentError(f"n must be >= 1, got {n}")
    pi = float(skilled_proportion(market, theta))
    actions = (rng.random(n) < pi).astype(int)
    u = rng.random(n)
    scores = np.where(actions == 1, market.skilled.ppf(u), market.unskilled.ppf(u))
    return scores, actions


def realized_loss(market: MarketModel, theta: float, scores, actions):
    """Per-worker loss ``1{X > theta} * (-delta1 * A + delta0 * (1 - A))``."""
    hired = np.asarray(scores) > theta
    actions = np.asarray(actions)
    return hired * (-market.delta1 * actions + market.delta0 * (1 - actions))


def true_optimum(market: MarketModel, theta_grid):
    """Grid minimizer of the performative risk; ties resolve to the smallest threshold."""
    grid = np.asarray(theta_grid, dtype=float)
    if grid.size == 0:
        raise ArgumentError("theta grid is empty")
    risk = performative_risk(market, grid)
    # lexsort keys: risk first, then threshold, so exact ties go to the smallest threshold
    i = int(np.lexsort((grid, risk))[0])
    return float(grid[i]), float(risk[i])
