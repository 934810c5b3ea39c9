"""Choosing where to deploy models: optimal and sequential design densities.

The optimal density over benefit gaps is proportional to the noise level
``sigma(b)`` of the observed proportions.  Since ``sigma`` depends on the
unknown CDF, the sequential procedure refits the CDF on each episode and
samples the next episode from the plug-in density.  Episode lengths double.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from perfmap.errors import ArgumentError
from perfmap.monotone import fit_cdf_univariate
from perfmap.rng import child_seed, stream

GRID_SIZE = 512
DENSITY_FLOOR = 0.01


@dataclass(frozen=True)
class DesignDensity:
    """Piecewise-constant probability density on ``[edges[0], edges[-1]]``."""

    bin_edges: np.ndarray
    bin_density: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.bin_edges, dtype=float)
        dens = np.asarray(self.bin_density, dtype=float)
        if edges.ndim != 1 or dens.shape != (edges.size - 1,):
            raise ArgumentError("need len(bin_edges) == len(bin_density) + 1")
        if np.any(np.diff(edges) <= 0):
            raise ArgumentError("bin edges must be strictly increasing")
        if np.any(~(dens > 0)):
            raise ArgumentError("bin densities must be strictly positive")
        mass = float(np.dot(dens, np.diff(edges)))
        if abs(mass - 1.0) > 1e-9:
            raise ArgumentError(f"density integrates to {mass!r}, not 1")
        object.__setattr__(self, "bin_edges", edges)
        object.__setattr__(self, "bin_density", dens)

    @classmethod
    def uniform(cls, b_max: float = 1.0, bins: int = GRID_SIZE) -> "DesignDensity":
        return cls(np.linspace(0.0, b_max, bins + 1), np.full(bins, 1.0 / b_max))

    @property
    def b_max(self) -> float:
        return float(self.bin_edges[-1])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.bin_edges)

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])

    def pdf(self, b):
        b = np.asarray(b, dtype=float)
        idx = np.clip(np.searchsorted(self.bin_edges, b, side="right") - 1, 0, self.bin_density.size - 1)
        inside = (b >= self.bin_edges[0]) & (b <= self.bin_edges[-1])
        return np.where(inside, self.bin_density[idx], 0.0)

    def quantile(self, u):
        """Inverse CDF; exact within each bin."""
        u = np.asarray(u, dtype=float)
        cum = np.concatenate([[0.0], np.cumsum(self.bin_density * self.widths)])
        cum[-1] = 1.0
        idx = np.clip(np.searchsorted(cum, u, side="right") - 1, 0, self.bin_density.size - 1)
        out = self.bin_edges[idx] + (u - cum[idx]) / self.bin_density[idx]
        return np.clip(out, self.bin_edges[0], self.bin_edges[-1])

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return sample_design(self, n, rng)


def _grid_edges(b_max: float, bins: int) -> np.ndarray:
    return np.linspace(0.0, b_max, bins + 1)


def optimal_density(sigma, b_max: float = 1.0, edges=None, floor: float = DENSITY_FLOOR) -> DesignDensity:
    """Density proportional to ``sigma`` (given at bin midpoints), floored at ``floor * max(sigma)``.

    An all-zero ``sigma`` gives the uniform density.
    """
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma < 0) or np.any(~np.isfinite(sigma)):
        raise ArgumentError("sigma values must be finite and nonnegative")
    edges = _grid_edges(b_max, sigma.size) if edges is None else np.asarray(edges, dtype=float)
    widths = np.diff(edges)
    top = sigma.max()
    if top <= 0:
        return DesignDensity(edges, np.full(sigma.size, 1.0 / (edges[-1] - edges[0])))
    shaped = np.maximum(sigma, floor * top)
    return DesignDensity(edges, shaped / np.dot(shaped, widths))


def sigma_from_fit(fit: Callable, b_max: float = 1.0, bins: int = GRID_SIZE) -> np.ndarray:
    """Binomial noise level ``sqrt(F(1 - F))`` of a CDF estimate at the bin midpoints."""
    edges = _grid_edges(b_max, bins)
    mid = 0.5 * (edges[:-1] + edges[1:])
    f = np.clip(np.asarray(fit(mid), dtype=float), 0.0, 1.0)
    return np.sqrt(f * (1.0 - f))


def design_from_cdf(cdf: Callable, b_max: float = 1.0, bins: int = GRID_SIZE,
                    floor: float = DENSITY_FLOOR) -> DesignDensity:
    return optimal_density(sigma_from_fit(cdf, b_max, bins), b_max=b_max, floor=floor)


def sample_design(density: DesignDensity, n: int, rng: np.random.Generator) -> np.ndarray:
    if n < 1:
        raise ArgumentError(f"n must be >= 1, got {n}")
    return density.quantile(rng.random(n))


def observe_proportions(true_cdf: Callable, b, per_point_n: Optional[int], rng: np.random.Generator):
    """Simulated proportions at benefit gaps ``b``: Binomial(n, F(b)) / n, or ``F(b)`` when ``n`` is None.

    Each agent compares its own uniform draw to ``F(b)``, so two designs fed
    the same stream share their noise (common random numbers).
    """
    p = np.clip(np.asarray(true_cdf(b), dtype=float), 0.0, 1.0)
    if per_point_n is None:
        return p
    u = rng.random((p.size, per_point_n))
    return (u < p[:, None]).mean(axis=1)


def integrated_squared_error(estimate: Callable, true_cdf: Callable, b_max: float = 1.0,
                             grid: int = GRID_SIZE) -> float:
    b = np.linspace(0.0, b_max, grid)
    diff = np.asarray(estimate(b), dtype=float) - np.asarray(true_cdf(b), dtype=float)
    return float(np.trapezoid(diff**2, b))


def mise_monte_carlo(
    true_cdf: Callable,
    density: DesignDensity,
    per_point_n: Optional[int],
    points_per_rep: int,
    replications: int,
    rng: np.random.Generator,
) -> float:
    """Average integrated squared error of the isotonic CDF fit under ``density``."""
    if replications < 1:
        raise ArgumentError("replications must be >= 1")
    total = 0.0
    for _ in range(replications):
        b = density.quantile(rng.random(points_per_rep))
        pi_hat = observe_proportions(true_cdf, b, per_point_n, rng)
        fit = fit_cdf_univariate(b, pi_hat, per_point_n or 1)
        total += integrated_squared_error(fit, true_cdf, density.b_max)
    return total / replications


def relative_efficiency(mise_d: float, mise_dstar: float) -> float:
    """``1 - MISE(d*) / MISE(d)``; negative values are allowed (sampling noise)."""
    if not (mise_d > 0 and mise_dstar > 0):
        raise ArgumentError("MISE values must be positive")
    return 1.0 - mise_dstar / mise_d


def number_of_episodes(total: int, tau0: int) -> int:
    """``floor(log2(1 + total / tau0))`` computed in integers."""
    if tau0 < 1 or total < tau0:
        raise ArgumentError(f"need total >= tau0 >= 1, got total={total}, tau0={tau0}")
    return ((total // tau0) + 1).bit_length() - 1


@dataclass
class EpisodeRecord:
    episode: int
    length: int
    density: DesignDensity
    fit: object
    mise: float
    mise_dstar: float
    rel: float


@dataclass
class EpisodeTrace:
    episodes: list = field(default_factory=list)

    CSV_COLUMNS = ("episode", "length", "mise", "mise_dstar", "rel")

    def rows(self):
        return [(e.episode, e.length, e.mise, e.mise_dstar, e.rel) for e in self.episodes]

    @property
    def rel(self) -> np.ndarray:
        return np.array([e.rel for e in self.episodes])

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.CSV_COLUMNS)
        for row in self.rows():
            writer.writerow([row[0], row[1], repr(float(row[2])), repr(float(row[3])), repr(float(row[4]))])
        return buf.getvalue()


@dataclass(frozen=True)
class SequentialDesignConfig:
    true_cdf: Callable
    tau0: int = 64
    episodes: int = 6
    per_point_n: int = 50
    b_max: float = 1.0
    mise_replications: int = 50
    mise_points: Optional[int] = None
    pool_episodes: bool = False
    shrink_variance: bool = True
    floor: float = DENSITY_FLOOR

    def __post_init__(self):
        if self.tau0 < 2:
            raise ArgumentError(f"tau0 must be >= 2, got {self.tau0}")
        if self.episodes < 1:
            raise ArgumentError(f"episodes must be >= 1, got {self.episodes}")
        if self.per_point_n < 1:
            raise ArgumentError(f"per_point_n must be >= 1, got {self.per_point_n}")


def run_sequential_design(config: SequentialDesignConfig, rng: np.random.Generator) -> EpisodeTrace:
    """Episode-doubling sequential design with per-episode MISE and REL.

    Episode ``k`` draws ``tau0 * 2**(k-1)`` gaps from the current density,
    refits the CDF on that episode's data (or all data so far when
    ``pool_episodes``), and sets the next density proportional to the
    plug-in noise level.  MISE under the episode's density and under the
    true optimal density are estimated on a shared random stream.
    """
    cfg = config
    dstar = design_from_cdf(cfg.true_cdf, cfg.b_max, floor=cfg.floor)
    density = DesignDensity.uniform(cfg.b_max)
    trace = EpisodeTrace()
    seen_b, seen_pi = [], []
    for k in range(1, cfg.episodes + 1):
        length = cfg.tau0 * 2 ** (k - 1)
        mise_seed = child_seed(rng)
        b = density.sample(length, rng)
        pi_hat = observe_proportions(cfg.true_cdf, b, cfg.per_point_n, rng)
        if cfg.pool_episodes:
            seen_b.append(b)
            seen_pi.append(pi_hat)
            b, pi_hat = np.concatenate(seen_b), np.concatenate(seen_pi)
        fit = fit_cdf_univariate(b, pi_hat, cfg.per_point_n)

        points = cfg.mise_points or length
        mise = mise_monte_carlo(cfg.true_cdf, density, cfg.per_point_n, points, cfg.mise_replications,
                                stream(mise_seed))
        mise_star = mise_monte_carlo(cfg.true_cdf, dstar, cfg.per_point_n, points, cfg.mise_replications,
                                     stream(mise_seed))
        trace.episodes.append(
            EpisodeRecord(k, length, density, fit, mise, mise_star, relative_efficiency(mise, mise_star))
        )
        plug_in = fit
        if cfg.shrink_variance:
            # add-one binomial shrinkage keeps plug-in sigma off zero where the fit is flat at 0 or 1
            n = cfg.per_point_n
            plug_in = lambda b, fit=fit, n=n: (n * np.asarray(fit(b)) + 1.0) / (n + 2.0)
        density = optimal_density(sigma_from_fit(plug_in, cfg.b_max), b_max=cfg.b_max, floor=cfg.floor)
    return trace
