"""Experiment runners.  Each returns result tables plus the curves to plot.

Every replication draws from its own stream ``(seed, experiment, replication)``
so results do not depend on execution order or thread count.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import stats

from perfmap.coate_loury import (
    COST_CDFS,
    MarketModel,
    power_scores,
    simulate_market,
    threshold_for_incentive,
)
from perfmap.core import (
    contrast_matrices,
    gaussian_cost,
    monte_carlo_choice_probabilities,
    sample_actions,
)
from perfmap.design import SequentialDesignConfig, run_sequential_design
from perfmap.errors import PerfmapError
from perfmap.harness.config import RunConfig
from perfmap.monotone import assemble_distribution_map, fit_cdf_univariate, fit_monotone_multivariate
from perfmap.parametric import fit_parametric, predict_parametric
from perfmap.proportions import estimate_direct, estimate_moment_matching
from perfmap.regret import RegretConfig, fit_growth_exponent, run_regret_experiment
from perfmap.rng import stream

# integer stream tags; stream paths must be integers
_TAG = {"fit-univariate": 1, "fit-multivariate": 2, "design-run": 3, "regret-run": 4, "appendix-c": 5}
_TRUTH = 2**32  # replication slot reserved for shared ground truth


@dataclass
class Table:
    name: str
    columns: tuple
    rows: list

    @property
    def filename(self) -> str:
        return f"{self.name}.csv"

    def column(self, name: str) -> np.ndarray:
        i = self.columns.index(name)
        return np.array([row[i] for row in self.rows])

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([_cell(v) for v in row])
        return buf.getvalue()


def _cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if value is None:
        return "nan"
    return str(value)


@dataclass
class Series:
    table: str
    x: str
    y: str
    label: str
    where: Optional[tuple] = None  # (column, value) row filter


@dataclass
class Curve:
    name: str
    title: str
    xlabel: str
    ylabel: str
    series: list
    logx: bool = False
    logy: bool = False
    points: bool = False


@dataclass
class ExperimentResult:
    tables: list
    curves: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def table(self, name: str) -> Table:
        return next(t for t in self.tables if t.name == name)


def build_market(config: RunConfig) -> MarketModel:
    mc = config.market
    if mc.cost == "probit":
        cdf = COST_CDFS["probit"](mc.cost_mu, mc.cost_sigma)
    else:
        cdf = COST_CDFS[mc.cost]()
    return MarketModel(
        wage=mc.wage,
        skilled=power_scores(mc.skilled_power),
        unskilled=power_scores(mc.unskilled_power),
        cost_cdf=cdf,
        delta0=mc.delta0,
        delta1=mc.delta1,
    )


def map_replications(fn: Callable[[int], object], replications: int, threads: int = 1) -> list:
    """Run ``fn(r)`` for every replication; results come back in index order."""
    if threads <= 1 or replications <= 1:
        return [fn(r) for r in range(replications)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(replications)))


def _fit_univariate_cdf(estimator: str, b, pi_hat, n) -> Callable:
    if estimator == "isotonic":
        return fit_cdf_univariate(b, pi_hat, n)
    fit = fit_parametric(estimator.split("-", 1)[1], b, pi_hat)
    return lambda x, fit=fit: predict_parametric(fit, x)


def run_fit_univariate(config: RunConfig, threads: int = 1) -> ExperimentResult:
    market = build_market(config)
    fc = config.fit
    b_max = market.b_max
    grid = np.linspace(0.0, b_max, fc.eval_points)
    f_true = np.asarray(market.cost_cdf(grid), dtype=float)
    skilled_c = float(market.skilled.cdf(fc.classifier_threshold))
    unskilled_c = float(market.unskilled.cdf(fc.classifier_threshold))
    # columns are E[h(X) | A = a] for h(x) = (1{x <= c}, 1{x > c})
    delta = np.array([[unskilled_c, skilled_c], [1.0 - unskilled_c, 1.0 - skilled_c]])

    def h(scores):
        above = (scores > fc.classifier_threshold).astype(float)
        return np.stack([1.0 - above, above], axis=1)

    def one(r: int):
        rng = stream(config.seed, _TAG["fit-univariate"], r)
        if fc.layout == "equidistant":
            b = np.linspace(0.0, b_max, fc.design_points + 2)[1:-1]
        else:
            b = np.sort(rng.uniform(0.0, b_max, fc.design_points))
        thetas = np.atleast_1d(threshold_for_incentive(market, b))
        pi_hat = np.empty(b.size)
        for i, theta in enumerate(thetas):
            scores, actions = simulate_market(market, float(theta), fc.per_point_n, rng)
            if fc.proportions == "direct":
                pi_hat[i] = estimate_direct(actions, 2)[1]
            else:
                pi_hat[i] = estimate_moment_matching(scores, h, delta)[1]
        fit = _fit_univariate_cdf(config.estimator, b, pi_hat, fc.per_point_n)
        f_hat = np.asarray(fit(grid), dtype=float)
        err = f_hat - f_true
        return f_hat, float(np.max(np.abs(err))), float(np.trapezoid(err**2, grid))

    results = map_replications(one, config.replications, threads)
    fits = Table("fit_univariate", ("b", "f_hat", "f_true"),
                 [(float(b), float(fh), float(ft)) for b, fh, ft in zip(grid, results[0][0], f_true)])
    summary = Table("fit_univariate_errors", ("replication", "sup_error", "ise"),
                    [(r, res[1], res[2]) for r, res in enumerate(results)])
    curve = Curve(
        "fit_univariate", "Estimated cost CDF", "benefit gap b", "P(invest)",
        [Series("fit_univariate", "b", "f_hat", "estimate"), Series("fit_univariate", "b", "f_true", "truth")],
    )
    return ExperimentResult([fits, summary], [curve], {"median_sup_error": float(np.median(summary.column("sup_error")))})


def run_fit_multivariate(config: RunConfig, threads: int = 1) -> ExperimentResult:
    mv = config.multivariate
    count = mv.actions
    cost = gaussian_cost(np.zeros(count), np.eye(count))
    contrasts = contrast_matrices(count)
    truth_rng = stream(config.seed, _TAG["fit-multivariate"], _TRUTH)
    benefits = truth_rng.uniform(mv.benefit_low, mv.benefit_high, (mv.models, count))
    d_true = monte_carlo_choice_probabilities(cost, benefits, mv.mc_samples, truth_rng)

    def one(r: int):
        rng = stream(config.seed, _TAG["fit-multivariate"], r)
        pi_hat = np.array([estimate_direct(sample_actions(cost, row, mv.per_model_n, rng), count) for row in benefits])
        fits = {
            a: fit_monotone_multivariate(contrasts[a].apply(benefits), pi_hat[:, a], np.full(mv.models, mv.per_model_n))
            for a in range(1, count)
        }
        d_hat = assemble_distribution_map(fits, contrasts).probabilities(benefits)
        return pi_hat, d_hat

    results = map_replications(one, config.replications, threads)
    rows, summary = [], []
    for r, (pi_hat, d_hat) in enumerate(results):
        for m in range(mv.models):
            for a in range(count):
                rows.append((r, m, a, float(pi_hat[m, a]), float(d_true[m, a]), float(d_hat[m, a])))
        summary.append((r, float(np.mean(np.sum((d_hat - d_true) ** 2, axis=1))),
                        float(np.mean(np.sum((pi_hat - d_true) ** 2, axis=1)))))
    table = Table("fit_multivariate", ("replication", "model", "action", "pi_hat", "d_true", "d_hat"), rows)
    errors = Table("fit_multivariate_errors", ("replication", "mse_fit", "mse_raw"), summary)
    curve = Curve(
        "fit_multivariate", "Fitted vs true action probabilities (replication 0)", "true", "fitted",
        [Series("fit_multivariate", "d_true", "d_hat", "fit", ("replication", 0)),
         Series("fit_multivariate", "d_true", "pi_hat", "raw proportion", ("replication", 0))],
        points=True,
    )
    return ExperimentResult([table, errors], [curve], {"median_mse_fit": float(np.median(errors.column("mse_fit")))})


def run_design(config: RunConfig, threads: int = 1) -> ExperimentResult:
    market = build_market(config)
    dc = config.design
    design_config = SequentialDesignConfig(
        true_cdf=market.cost_cdf,
        tau0=dc.tau0,
        episodes=dc.episodes,
        per_point_n=dc.per_point_n,
        b_max=market.b_max,
        mise_replications=dc.mise_replications,
        mise_points=dc.mise_points,
        pool_episodes=dc.pool_episodes,
        shrink_variance=dc.shrink_variance,
        floor=dc.floor,
    )
    traces = map_replications(
        lambda r: run_sequential_design(design_config, stream(config.seed, _TAG["design-run"], r)),
        config.replications,
        threads,
    )
    per_rep = [(r, *row) for r, trace in enumerate(traces) for row in trace.rows()]
    rows = []
    for k in range(dc.episodes):
        recs = [trace.episodes[k] for trace in traces]
        rows.append((
            k + 1, recs[0].length,
            float(np.median([e.mise for e in recs])),
            float(np.median([e.mise_dstar for e in recs])),
            float(np.median([e.rel for e in recs])),
        ))
    columns = ("episode", "length", "mise", "mise_dstar", "rel")
    table = Table("design", columns, rows)
    reps = Table("design_replications", ("replication",) + columns, per_rep)
    curves = [
        Curve("design_rel", "Relative efficiency of the plug-in design (median)", "episode", "REL",
              [Series("design", "episode", "rel", "median REL")], points=True),
        Curve("design_mise", "MISE by episode (median)", "episode", "MISE",
              [Series("design", "episode", "mise", "plug-in design"), Series("design", "episode", "mise_dstar", "optimal design")],
              logy=True, points=True),
    ]
    return ExperimentResult([table, reps], curves, {"final_rel": rows[-1][4], "first_rel": rows[0][4]})


def run_regret(config: RunConfig, threads: int = 1) -> ExperimentResult:
    market = build_market(config)
    rc = config.regret
    regret_config = RegretConfig(
        market=market,
        total=rc.total,
        tau0=rc.tau0,
        alpha=rc.alpha,
        per_point_n=rc.per_point_n,
        estimator=config.estimator,
        theta_grid=np.linspace(0.0, 1.0, rc.theta_grid),
        shrink_variance=rc.shrink_variance,
    )
    traces = map_replications(
        lambda r: run_regret_experiment(regret_config, stream(config.seed, _TAG["regret-run"], r)),
        config.replications,
        threads,
    )
    tables, summary, episodes = [], [], []
    columns = ("m", "episode", "phase", "b", "theta", "pr", "regret_cum")
    for r, trace in enumerate(traces):
        rows = [
            (m + 1, int(trace.episode[m]), trace.phase[m], float(trace.b[m]), float(trace.theta[m]),
             float(trace.pr[m]), float(trace.regret_cum[m]))
            for m in range(len(trace))
        ]
        tables.append(Table(f"regret_r{r:03d}", columns, rows))
        exponent = fit_growth_exponent(trace.regret_cum, rc.tail_fraction)
        summary.append((r, exponent, float(trace.regret_cum[-1]), trace.exploitation_regret(),
                        trace.theta_star, trace.pr_star))
        for d in trace.diagnostics:
            episodes.append((r, d.episode, d.theta_hat, d.pr_true, d.pr_hat, d.plug_in_gap, d.plug_in_bound))
    tables.append(Table("regret_summary",
                        ("replication", "exponent", "regret_total", "exploit_regret", "theta_star", "pr_star"), summary))
    tables.append(Table("regret_episodes",
                        ("replication", "episode", "theta_hat", "pr_true", "pr_hat", "plug_in_gap", "plug_in_bound"),
                        episodes))
    curve = Curve(
        "regret", "Cumulative regret", "deployments m", "regret",
        [Series(t.name, "m", "regret_cum", f"replication {r}") for r, t in enumerate(tables[: len(traces)])],
        logx=True, logy=True,
    )
    exps = [s[1] for s in summary if s[1] is not None]
    return ExperimentResult(tables, [curve], {"median_exponent": float(np.median(exps)) if exps else None})


def appendix_c_truth(config: RunConfig):
    """Shared cost law, benefit vectors and true action probabilities."""
    ac = config.appendix_c
    count = ac.actions
    cost = gaussian_cost(np.zeros(count), np.eye(count))
    rng = stream(config.seed, _TAG["appendix-c"], _TRUTH)
    benefits = rng.uniform(ac.benefit_low, ac.benefit_high, (ac.models, count))
    d_true = monte_carlo_choice_probabilities(cost, benefits, ac.mc_samples, rng)
    return contrast_matrices(count), benefits, d_true


def cumulative_map_errors(contrasts, benefits, d_true, pi_hat, n_values) -> list:
    """``sum_{m <= N} ||D(theta_m) - D_hat(theta_m)||^2`` with the map fitted on the first ``N`` models."""
    count = len(contrasts)
    gaps = [None] + [contrasts[a].apply(benefits) for a in range(1, count)]
    out = []
    for n in n_values:
        fits = {a: fit_monotone_multivariate(gaps[a][:n], pi_hat[:n, a]) for a in range(1, count)}
        d_hat = assemble_distribution_map(fits, contrasts).probabilities(benefits[:n])
        out.append(float(np.sum((d_true[:n] - d_hat) ** 2)))
    return out


def run_appendix_c(config: RunConfig, threads: int = 1) -> ExperimentResult:
    ac = config.appendix_c
    contrasts, benefits, d_true = appendix_c_truth(config)

    def one(r: int):
        rng = stream(config.seed, _TAG["appendix-c"], r)
        noise = rng.normal(0.0, ac.noise_sd, d_true.shape) if ac.noise_sd > 0 else 0.0
        pi_hat = np.clip(d_true + noise, 0.0, 1.0)
        return cumulative_map_errors(contrasts, benefits, d_true, pi_hat, ac.n_values)

    results = map_replications(one, config.replications, threads)
    rows = [(r, n, err) for r, errs in enumerate(results) for n, err in zip(ac.n_values, errs)]
    table = Table("appendix_c", ("replication", "N", "cum_error"), rows)
    per_point = np.array(results) / np.array(ac.n_values)[None, :]
    rhos = [stats.spearmanr(ac.n_values, p).statistic for p in per_point] if len(ac.n_values) > 1 else []
    mean_rows = [(n, float(v)) for n, v in zip(ac.n_values, per_point.mean(axis=0))]
    mean_table = Table("appendix_c_mean", ("N", "mean_per_point_error"), mean_rows)
    curve = Curve(
        "appendix_c", f"Average per-model map error, {ac.actions} actions", "N", "error / N",
        [Series("appendix_c_mean", "N", "mean_per_point_error", "mean over replications")], points=True,
    )
    summary = {"median_spearman": float(np.median(rhos)) if rhos else None}
    return ExperimentResult([table, mean_table], [curve], summary)


RUNNERS = {
    "fit-univariate": run_fit_univariate,
    "fit-multivariate": run_fit_multivariate,
    "design-run": run_design,
    "regret-run": run_regret,
    "appendix-c": run_appendix_c,
}


def run(config: RunConfig, threads: int = 1) -> ExperimentResult:
    try:
        runner = RUNNERS[config.experiment]
    except KeyError:
        raise PerfmapError(f"unknown experiment {config.experiment!r}") from None
    return runner(config, threads)
