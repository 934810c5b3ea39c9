"""Action spaces, contrast matrices, random costs and the agent choice model.

An agent facing benefits ``B`` and a private random cost vector ``C`` picks
``argmax_a B[a] - C[a]``.  Ties go to the smallest action index, so the
degenerate (deterministic) cost models used in tests stay well defined.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import stats

from perfmap.errors import ArgumentError, ModelError, ShapeError

DEGENERATE_ZERO = "degenerate-zero"
UNIVARIATE_CDF = "univariate-cdf"
MULTIVARIATE_GAUSSIAN = "multivariate-gaussian"
GENERALIZED_INVERSE = "generalized-inverse"

_PSD_TOL = 1e-10


@dataclass(frozen=True)
class ActionSpace:
    """Finite action set ``{0, ..., count - 1}``."""

    count: int

    def __post_init__(self):
        if int(self.count) != self.count or self.count < 2:
            raise ArgumentError(f"action count must be an integer >= 2, got {self.count!r}")

    @property
    def actions(self) -> range:
        return range(self.count)


@dataclass(frozen=True)
class BenefitProfile:
    """Benefit vector ``B(theta)`` over an action space.

    ``inverse`` optionally maps a scalar benefit gap back to a model that
    realizes it; only binary problems use it.
    """

    action_space: ActionSpace
    eval: Callable[[object], np.ndarray]
    inverse: Optional[Callable[[float], object]] = None

    def __call__(self, theta) -> np.ndarray:
        values = np.asarray(self.eval(theta), dtype=float)
        if values.shape != (self.action_space.count,):
            raise ArgumentError(
                f"benefit vector has shape {values.shape}, expected ({self.action_space.count},)"
            )
        if not np.all(np.isfinite(values)):
            raise ArgumentError(f"benefit vector is not finite at theta={theta!r}")
        return values


@dataclass(frozen=True)
class ContrastMatrix:
    """Matrix ``L_a`` with ``L_a @ B == [B[a] - B[a'] for a' != a]``."""

    action: int
    rows: np.ndarray

    @property
    def count(self) -> int:
        return self.rows.shape[1]

    @property
    def others(self) -> list[int]:
        return [a for a in range(self.count) if a != self.action]

    def __matmul__(self, other):
        return self.rows @ other

    def apply(self, benefits: np.ndarray) -> np.ndarray:
        """Gaps for one benefit vector, or row-wise for an ``(m, count)`` array."""
        benefits = np.asarray(benefits, dtype=float)
        return benefits @ self.rows.T


def contrast_matrix(action: int, count: int) -> ContrastMatrix:
    if count < 2:
        raise ArgumentError(f"count must be >= 2, got {count}")
    if not 0 <= action < count:
        raise ArgumentError(f"action {action} outside 0..{count - 1}")
    others = [a for a in range(count) if a != action]
    rows = np.zeros((count - 1, count), dtype=int)
    rows[:, action] = 1
    rows[np.arange(count - 1), others] = -1
    return ContrastMatrix(action=action, rows=rows)


def contrast_matrices(count: int) -> list[ContrastMatrix]:
    return [contrast_matrix(a, count) for a in range(count)]


@dataclass(frozen=True)
class CostModel:
    """Distribution of the random cost vector ``C``.

    Build instances through :func:`zero_cost`, :func:`univariate_cost`,
    :func:`gaussian_cost` or :func:`cost_from_map_binary` rather than directly.
    Costs may be ``+inf`` (the action is unaffordable).
    """

    kind: str
    count: int
    cdf: Optional[Callable] = None
    ppf: Optional[Callable] = None
    mean: Optional[np.ndarray] = None
    cov: Optional[np.ndarray] = None
    b_max: Optional[float] = None
    _factor: Optional[np.ndarray] = field(default=None, repr=False)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ``n`` cost vectors as an ``(n, count)`` array."""
        if self.kind == DEGENERATE_ZERO:
            return np.zeros((n, self.count))
        if self.kind == MULTIVARIATE_GAUSSIAN:
            z = rng.standard_normal((n, self.count))
            return self.mean + z @ self._factor.T
        costs = np.zeros((n, 2))
        costs[:, 1] = self.ppf(rng.random(n))
        return costs

    def gap_cdf(self, gap):
        """``P(C_1 - C_0 < gap)`` for binary models; strict because ties go to action 0."""
        gap = np.asarray(gap, dtype=float)
        if self.kind == DEGENERATE_ZERO:
            return (gap > 0).astype(float)
        if self.kind == UNIVARIATE_CDF:
            return np.clip(self.cdf(gap), 0.0, 1.0)
        if self.kind == GENERALIZED_INVERSE:
            inside = np.clip(gap, 0.0, self.b_max)
            return np.where(gap <= 0, 0.0, np.clip(self.cdf(inside), 0.0, 1.0))
        if self.kind == MULTIVARIATE_GAUSSIAN:
            loc = self.mean[1] - self.mean[0]
            var = self.cov[0, 0] + self.cov[1, 1] - 2 * self.cov[0, 1]
            if var <= 0:
                return (gap > loc).astype(float)
            return stats.norm.cdf((gap - loc) / np.sqrt(var))
        raise ModelError(f"unknown cost kind {self.kind!r}")


def zero_cost(count: int) -> CostModel:
    ActionSpace(count)
    return CostModel(kind=DEGENERATE_ZERO, count=count)


def univariate_cost(cdf: Callable, ppf: Callable) -> CostModel:
    """Binary cost with ``C_0 = 0`` and ``C_1`` given by its CDF and quantile function."""
    return CostModel(kind=UNIVARIATE_CDF, count=2, cdf=cdf, ppf=ppf)


def scipy_cost(dist) -> CostModel:
    """Binary cost whose ``C_1`` follows a frozen ``scipy.stats`` distribution."""
    return univariate_cost(dist.cdf, dist.ppf)


def gaussian_cost(mean, cov) -> CostModel:
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    count = mean.shape[0]
    ActionSpace(count)
    if cov.shape != (count, count):
        raise ModelError(f"covariance shape {cov.shape} does not match mean length {count}")
    if not np.allclose(cov, cov.T, atol=1e-12):
        raise ModelError("covariance is not symmetric")
    evals, evecs = np.linalg.eigh(cov)
    if evals.min() < -_PSD_TOL * max(1.0, evals.max()):
        raise ModelError(f"covariance is not positive semidefinite (min eigenvalue {evals.min():.3g})")
    factor = evecs * np.sqrt(np.clip(evals, 0.0, None))
    return CostModel(kind=MULTIVARIATE_GAUSSIAN, count=count, mean=mean, cov=cov, _factor=factor)


def choose_actions(benefits: np.ndarray, costs: np.ndarray) -> np.ndarray:
    """Utility-maximizing action per cost row; ``argmax`` keeps the first maximizer."""
    return np.argmax(np.asarray(benefits, dtype=float) - costs, axis=-1)


def sample_actions(cost: CostModel, benefits, n: int, rng: np.random.Generator) -> np.ndarray:
    benefits = np.asarray(benefits, dtype=float)
    if benefits.shape != (cost.count,):
        raise ArgumentError(f"benefits must have length {cost.count}, got shape {benefits.shape}")
    if n < 1:
        raise ArgumentError(f"n must be >= 1, got {n}")
    return choose_actions(benefits, cost.sample(n, rng))


def exact_choice_probabilities(
    cost: CostModel,
    benefits,
    mc_samples: int = 100_000,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """Action probabilities ``F_a(L_a B)`` for every action.

    Binary models are evaluated in closed form.  Larger Gaussian models fall
    back to Monte Carlo with ``mc_samples`` draws from ``rng``.
    """
    benefits = np.asarray(benefits, dtype=float)
    if benefits.shape != (cost.count,):
        raise ArgumentError(f"benefits must have length {cost.count}, got shape {benefits.shape}")
    if cost.count == 2:
        p1 = float(cost.gap_cdf(benefits[1] - benefits[0]))
        return np.array([1.0 - p1, p1])
    if cost.kind == DEGENERATE_ZERO:
        out = np.zeros(cost.count)
        out[int(np.argmax(benefits))] = 1.0
        return out
    if rng is None:
        raise ArgumentError("Monte Carlo choice probabilities need an rng")
    return monte_carlo_choice_probabilities(cost, benefits[None, :], mc_samples, rng)[0]


def monte_carlo_choice_probabilities(
    cost: CostModel,
    benefit_rows: np.ndarray,
    mc_samples: int,
    rng: np.random.Generator,
    chunk: int = 20_000,
) -> np.ndarray:
    """Choice probabilities for many benefit vectors with one shared set of cost draws.

    Sharing the draws makes the estimates empirical CDFs of the same sample,
    so they stay exactly monotone in each contrast vector.
    """
    benefit_rows = np.atleast_2d(np.asarray(benefit_rows, dtype=float))
    counts = np.zeros((benefit_rows.shape[0], cost.count))
    done = 0
    while done < mc_samples:
        size = min(chunk, mc_samples - done)
        costs = cost.sample(size, rng)
        for i, row in enumerate(benefit_rows):
            counts[i] += np.bincount(choose_actions(row, costs), minlength=cost.count)
        done += size
    return counts / mc_samples


def _validate_nondecreasing(g: Callable, b_max: float, grid_size: int = 1001) -> None:
    grid = np.linspace(0.0, b_max, grid_size)
    values = np.asarray(g(grid), dtype=float)
    if np.any(values < -1e-12) or np.any(values > 1 + 1e-12):
        raise ShapeError("map values must lie in [0, 1]")
    drops = np.diff(values)
    if np.any(drops < -1e-12):
        where = grid[1:][np.argmin(drops)]
        raise ShapeError(f"map decreases near b={where:.6g}")


def _generalized_inverse(g: Callable, b_max: float, iterations: int = 64) -> Callable:
    def ppf(u):
        u = np.asarray(u, dtype=float)
        lo = np.zeros_like(u)
        hi = np.full_like(u, b_max)
        # invariant: g(hi) >= u wherever a solution exists
        for _ in range(iterations):
            mid = 0.5 * (lo + hi)
            above = np.asarray(g(mid), dtype=float) >= u
            hi = np.where(above, mid, hi)
            lo = np.where(above, lo, mid)
        out = hi
        out = np.where(u <= np.asarray(g(np.zeros_like(u)), dtype=float), 0.0, out)
        out = np.where(u > np.asarray(g(np.full_like(u, b_max)), dtype=float), np.inf, out)
        return out

    return ppf


def cost_from_map_binary(g: Callable, b_max: float = 1.0) -> CostModel:
    """Cost model reproducing a binary distribution map ``D_1 = g(B_1 - B_0)``.

    ``C_0`` is identically zero and ``C_1 = inf{b : g(b) >= U}`` for a uniform
    ``U``.  The mass ``g(0)`` sits at zero and the missing mass ``1 - g(b_max)``
    at ``+inf``, so ``P(C_1 <= b) = g(b)`` on ``[0, b_max]``.
    """
    if not b_max > 0:
        raise ArgumentError(f"b_max must be positive, got {b_max}")
    _validate_nondecreasing(g, b_max)
    return CostModel(
        kind=GENERALIZED_INVERSE,
        count=2,
        cdf=g,
        ppf=_generalized_inverse(g, b_max),
        b_max=float(b_max),
    )
