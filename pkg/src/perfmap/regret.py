"""Plug-in performative risk minimization with an explore/exploit doubling schedule.

Each episode first explores: it deploys thresholds whose incentives are
drawn from the current design density and refits the cost CDF.  It then
exploits, deploying the minimizer of the plug-in risk for the rest of the
episode.  Regret is measured against the true risk minimizer on the same
threshold grid, so every increment is nonnegative.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from perfmap.coate_loury import (
    MarketModel,
    conditional_losses,
    incentive,
    performative_risk,
    threshold_for_incentive,
    true_optimum,
)
from perfmap.design import DENSITY_FLOOR, DesignDensity, observe_proportions, optimal_density, sigma_from_fit
from perfmap.errors import ArgumentError
from perfmap.monotone import DistributionMapEstimate, fit_cdf_univariate
from perfmap.parametric import fit_parametric, predict_parametric

ISOTONIC = "isotonic"
PROBIT = "parametric-probit"
LOGIT = "parametric-logit"
ORACLE = "oracle"
ESTIMATORS = (ISOTONIC, PROBIT, LOGIT, ORACLE)

# uniform-convergence exponents of the CDF estimators
ETA = {ISOTONIC: 1.0 / 3.0, PROBIT: 0.5, LOGIT: 0.5, ORACLE: 1.0}

THETA_GRID_SIZE = 256


def default_alpha(estimator: str) -> float:
    return 1.0 / (1.0 + ETA[estimator])


@dataclass(frozen=True)
class EpisodeSchedule:
    tau0: int
    total: int
    alpha: float
    lengths: tuple
    explore: tuple

    @property
    def episodes(self) -> int:
        return len(self.lengths)

    @property
    def exploit(self) -> tuple:
        return tuple(j - i for j, i in zip(self.lengths, self.explore))

    @property
    def deployments(self) -> int:
        return sum(self.lengths)


def _ceil_power(length: int, alpha: float) -> int:
    value = length**alpha
    nearest = round(value)
    # exact powers such as 16**0.75 == 8 must not round up through float noise
    if abs(value - nearest) < 1e-9 * max(1.0, value):
        return int(nearest)
    return math.ceil(value)


def episode_schedule(total: int, tau0: int, alpha: float) -> EpisodeSchedule:
    """Episode lengths ``tau0 * 2**(k-1)`` with ``ceil(length**alpha)`` exploration steps each."""
    if tau0 < 2:
        raise ArgumentError(f"tau0 must be >= 2, got {tau0}")
    if total < tau0:
        raise ArgumentError(f"total deployments {total} must be >= tau0 {tau0}")
    if not 0 < alpha <= 1:
        raise ArgumentError(f"alpha must lie in (0, 1], got {alpha}")
    episodes = ((total // tau0) + 1).bit_length() - 1
    lengths = tuple(tau0 * 2 ** (k - 1) for k in range(1, episodes + 1))
    explore = tuple(min(j, max(1, _ceil_power(j, alpha))) for j in lengths)
    return EpisodeSchedule(tau0, total, alpha, lengths, explore)


def estimated_pr(dist_map: Callable, loss_expectations: Callable, theta_grid):
    """Plug-in risk on a grid and its minimizer (smallest threshold on ties).

    ``dist_map(theta_grid)`` returns an ``(n, count)`` array of action
    probabilities and ``loss_expectations(theta_grid)`` a ``(count, n)`` array
    of conditional expected losses.
    """
    grid = np.asarray(theta_grid, dtype=float)
    if grid.size == 0:
        raise ArgumentError("theta grid is empty")
    probs = np.asarray(dist_map(grid), dtype=float)
    losses = np.asarray(loss_expectations(grid), dtype=float)
    values = np.sum(probs * losses.T, axis=1)
    i = int(np.lexsort((grid, values))[0])
    return float(grid[i]), values


def market_map(market: MarketModel, cdf: Callable) -> Callable:
    """Binary distribution map ``theta -> (1 - F(I(theta)), F(I(theta)))`` for a CDF estimate."""

    def probs(theta):
        p1 = np.clip(np.asarray(cdf(incentive(market, theta)), dtype=float), 0.0, 1.0)
        return np.stack([1.0 - p1, p1], axis=-1)

    return probs


def binary_map_estimate(market: MarketModel, fit) -> DistributionMapEstimate:
    """Wrap a univariate fit as a two-action distribution map over thresholds."""
    from perfmap.core import contrast_matrices

    return DistributionMapEstimate(contrast_matrices(2), {1: fit}, market.benefit_profile())


TAIL_FRACTION = 0.9


def fit_growth_exponent(trace, tail_fraction: float = TAIL_FRACTION) -> Optional[float]:
    """Slope of ``log(regret)`` against ``log(m)`` over the last ``tail_fraction`` of deployments.

    The default tail spans several doubling episodes; a tail inside a single
    episode mostly measures the explore-then-exploit shape of that episode.
    ``trace`` is a :class:`RegretTrace` or a cumulative-regret array.
    Returns ``None`` when the tail has no positive regret (e.g. oracle runs).
    """
    regret_cum = np.asarray(getattr(trace, "regret_cum", trace), dtype=float)
    if regret_cum.size < 16:
        raise ArgumentError("need at least 16 deployments to fit a growth exponent")
    if not 0 < tail_fraction <= 1:
        raise ArgumentError("tail_fraction must lie in (0, 1]")
    m = np.arange(1, regret_cum.size + 1)
    start = int(math.floor(regret_cum.size * (1.0 - tail_fraction)))
    m, r = m[start:], regret_cum[start:]
    keep = r > 0
    if keep.sum() < 2:
        return None
    slope, _ = np.polyfit(np.log(m[keep]), np.log(r[keep]), 1)
    return float(slope)


@dataclass
class EpisodeDiagnostics:
    episode: int
    theta_hat: float
    pr_true: float
    pr_hat: float
    map_error: float
    loss_bound: float

    @property
    def plug_in_gap(self) -> float:
        return abs(self.pr_true - self.pr_hat)

    @property
    def plug_in_bound(self) -> float:
        return self.map_error * self.loss_bound


@dataclass
class RegretTrace:
    episode: np.ndarray
    phase: list
    b: np.ndarray
    theta: np.ndarray
    pr: np.ndarray
    regret_cum: np.ndarray
    theta_star: float
    pr_star: float
    diagnostics: list = field(default_factory=list)

    CSV_COLUMNS = ("m", "episode", "phase", "b", "theta", "pr", "regret_cum")

    def __len__(self):
        return len(self.pr)

    @property
    def increments(self) -> np.ndarray:
        return self.pr - self.pr_star

    def exploitation_regret(self) -> float:
        mask = np.array([p == "exploit" for p in self.phase])
        return float(self.increments[mask].sum())

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.CSV_COLUMNS)
        for m in range(len(self)):
            writer.writerow([
                m + 1, int(self.episode[m]), self.phase[m], repr(float(self.b[m])),
                repr(float(self.theta[m])), repr(float(self.pr[m])), repr(float(self.regret_cum[m])),
            ])
        return buf.getvalue()


@dataclass(frozen=True)
class RegretConfig:
    market: MarketModel
    total: int = 8192
    tau0: int = 8
    alpha: Optional[float] = None
    per_point_n: int = 50
    estimator: str = ISOTONIC
    theta_grid: Optional[np.ndarray] = None
    floor: float = DENSITY_FLOOR
    shrink_variance: bool = True

    def __post_init__(self):
        if self.estimator not in ESTIMATORS:
            raise ArgumentError(f"unknown estimator {self.estimator!r}; choose from {ESTIMATORS}")
        if self.per_point_n < 1:
            raise ArgumentError("per_point_n must be >= 1")

    @property
    def grid(self) -> np.ndarray:
        if self.theta_grid is None:
            return np.linspace(0.0, 1.0, THETA_GRID_SIZE)
        return np.asarray(self.theta_grid, dtype=float)

    @property
    def schedule(self) -> EpisodeSchedule:
        alpha = default_alpha(self.estimator) if self.alpha is None else self.alpha
        return episode_schedule(self.total, self.tau0, alpha)


def _fit_cdf(estimator: str, market: MarketModel, b, pi_hat, n):
    if estimator == ORACLE:
        return market.cost_cdf
    if estimator == ISOTONIC:
        return fit_cdf_univariate(b, pi_hat, n)
    family = "probit" if estimator == PROBIT else "logit"
    if np.ptp(b) == 0:
        return lambda x: np.full(np.shape(x), float(np.mean(pi_hat)))
    fit = fit_parametric(family, b, pi_hat)
    if fit.degenerate:
        # no increasing trend in the data: fall back to the pooled proportion
        p = float(np.mean(pi_hat))
        return lambda x: np.full(np.shape(x), p)
    return lambda x: predict_parametric(fit, x)


def run_regret_experiment(config: RegretConfig, rng: np.random.Generator) -> RegretTrace:
    cfg = config
    market = cfg.market
    grid = cfg.grid
    schedule = cfg.schedule
    theta_star, pr_star = true_optimum(market, grid)
    # exploration deploys grid thresholds only, on the increasing branch of the incentive
    branch = grid[grid <= market.curve.peak]
    branch_b = incentive(market, branch)
    b_max = market.b_max
    loss = lambda th: conditional_losses(market, th)
    loss_bound = float(np.max(np.abs(conditional_losses(market, grid))))
    true_map = market_map(market, market.cost_cdf)

    n_total = schedule.deployments
    episode = np.zeros(n_total, dtype=int)
    phase: list = []
    b_out = np.zeros(n_total)
    theta_out = np.zeros(n_total)
    density = DesignDensity.uniform(b_max)
    diagnostics = []
    m = 0
    for k, (length, n_explore) in enumerate(zip(schedule.lengths, schedule.explore), start=1):
        b_draw = density.sample(n_explore, rng)
        b_draw = np.minimum(b_draw, b_max)
        thetas = threshold_for_incentive(market, b_draw)
        # snap to the deployment grid so regret increments stay >= 0
        idx = np.clip(np.searchsorted(branch, thetas), 0, branch.size - 1)
        lower = np.clip(idx - 1, 0, branch.size - 1)
        closer = np.abs(branch[lower] - thetas) <= np.abs(branch[idx] - thetas)
        idx = np.where(closer, lower, idx)
        thetas = branch[idx]
        gaps = branch_b[idx]
        pi_hat = observe_proportions(market.cost_cdf, gaps, cfg.per_point_n, rng)

        sl = slice(m, m + n_explore)
        episode[sl], b_out[sl], theta_out[sl] = k, gaps, thetas
        phase.extend(["explore"] * n_explore)
        m += n_explore

        cdf_hat = _fit_cdf(cfg.estimator, market, gaps, pi_hat, cfg.per_point_n)
        theta_hat, pr_hat = estimated_pr(market_map(market, cdf_hat), loss, grid)
        i_hat = int(np.searchsorted(grid, theta_hat))
        d_true = true_map(np.array([theta_hat]))[0]
        d_hat = market_map(market, cdf_hat)(np.array([theta_hat]))[0]
        diagnostics.append(EpisodeDiagnostics(
            episode=k,
            theta_hat=theta_hat,
            pr_true=float(performative_risk(market, theta_hat)),
            pr_hat=float(pr_hat[i_hat]),
            map_error=float(np.abs(d_true - d_hat).sum()),
            loss_bound=loss_bound,
        ))

        n_exploit = length - n_explore
        sl = slice(m, m + n_exploit)
        episode[sl], theta_out[sl] = k, theta_hat
        b_out[sl] = float(incentive(market, theta_hat))
        phase.extend(["exploit"] * n_exploit)
        m += n_exploit

        plug_in = cdf_hat
        if cfg.shrink_variance and cfg.estimator == ISOTONIC:
            n = cfg.per_point_n
            plug_in = lambda x, f=cdf_hat, n=n: (n * np.asarray(f(x)) + 1.0) / (n + 2.0)
        density = optimal_density(sigma_from_fit(plug_in, b_max), b_max=b_max, floor=cfg.floor)

    pr = performative_risk(market, theta_out)
    regret_cum = np.cumsum(pr - pr_star)
    return RegretTrace(episode, phase, b_out, theta_out, pr, regret_cum, theta_star, pr_star, diagnostics)
